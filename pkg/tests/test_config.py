import math

import numpy as np
import pytest

from monotonic_control.config import (
    ConfigError,
    InitialGuess,
    load_config,
    parse_config,
    point_name,
    read_field_csv,
)
from monotonic_control.core import TimeGrid

MINIMAL = """
[problem]
kind = "two_level"

[scheme]
alpha = 1.0
delta = 1.0
eta = 1.0

[stopping]
max_iters = 50
"""


def test_minimal():
    cfg = parse_config(MINIMAL)
    assert cfg.problem.kind == "two_level"
    assert cfg.policy.max_iters == 50
    assert cfg.eps0 == InitialGuess("zero")
    assert cfg.rule == "midpoint"
    assert cfg.tail_window == 20
    assert cfg.checks.enabled == ()
    [(name, params)] = cfg.points()
    assert name == "d1_e1_a1"
    assert (params.alpha, params.delta, params.eta) == (1.0, 1.0, 1.0)


def test_sweep_order():
    cfg = parse_config(MINIMAL.replace("alpha = 1.0", "alpha = [1.0, 2.0]").replace("delta = 1.0", "delta = [0.5, 1.5]"))
    names = [n for n, _ in cfg.points()]
    assert names == ["d0.5_e1_a1", "d1.5_e1_a1", "d0.5_e1_a2", "d1.5_e1_a2"]


def test_delta_out_of_range_cites_range():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace("delta = 1.0", "delta = 2.5"))
    msg = str(exc.value)
    assert "2.5" in msg and "[0, 2]" in msg and "scheme.delta" in msg and "line 7" in msg


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="detla"):
        parse_config(MINIMAL.replace("delta = 1.0", "detla = 1.0"))


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MINIMAL + "\n[plots]\nx = 1\n")


def test_problem_keys_checked_per_kind():
    with pytest.raises(ConfigError, match="n_x"):
        parse_config(MINIMAL.replace('kind = "two_level"', 'kind = "two_level"\nn_x = 4'))
    with pytest.raises(ConfigError, match="theta"):
        parse_config(MINIMAL.replace('kind = "two_level"', 'kind = "two_level"\ntheta = 3.0'))


@pytest.mark.parametrize(
    "old,new,fragment",
    [
        ("alpha = 1.0", "alpha = 0.0", "positive"),
        ("alpha = 1.0", "alpha = -2", "positive"),
        ("alpha = 1.0", 'alpha = "one"', "expected a number"),
        ("alpha = 1.0", "alpha = []", "empty"),
        ("max_iters = 50", "max_iters = 2.5", "integer"),
        ("max_iters = 50", "max_iters = -1", "max_iters"),
        ("eta = 1.0", 'eta = 1.0\nrule = "euler"', "rule"),
        ("eta = 1.0", "eta = nan", "finite"),
    ],
)
def test_domain_violations(old, new, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(MINIMAL.replace(old, new))


def test_syntax_error():
    with pytest.raises(ConfigError, match="parse error"):
        parse_config("[problem\nkind=1")


def test_unknown_check():
    with pytest.raises(ConfigError, match="unknown check"):
        parse_config(MINIMAL + '\n[checks]\nenabled = ["monotone"]\n')


def test_threshold_factor():
    text = MINIMAL.replace("alpha = 1.0", "alpha_threshold_factor = 1.1\nthreshold_M = 1.0").replace(
        'kind = "two_level"', 'kind = "two_level"\nT = 1.0'
    )
    cfg = parse_config(text)
    [(_, params)] = cfg.points()
    assert params.alpha == pytest.approx(1.1 * (1 + math.e) * math.e**2)
    with pytest.raises(ConfigError, match="threshold_M"):
        parse_config(MINIMAL.replace("alpha = 1.0", "alpha_threshold_factor = 1.1"))


def test_custom_problem_with_complex_entries():
    text = """
[problem]
kind = "custom"
H = [[0.0, 0.0], [0.0, 1.0]]
mu = [[0.0, 0.0], [0.0, 0.0]]
mu_imag = [[0.0, -1.0], [1.0, 0.0]]
O = [[0.0, 0.0], [0.0, 1.0]]
psi0 = [1.0, 0.0]
n_steps = 10

[scheme]
alpha = 1.0
"""
    cfg = parse_config(text)
    p = cfg.problem.build()
    assert p.mu.entries[1, 0] == 1j
    echo = cfg.echo()["problem"]
    assert echo["mu_imag"] == [[0.0, -1.0], [1.0, 0.0]]
    with pytest.raises(ConfigError, match="psi0"):
        parse_config(text.replace("psi0 = [1.0, 0.0]", ""))
    with pytest.raises(ConfigError, match="Hermitian"):
        parse_config(text.replace("H = [[0.0, 0.0], [0.0, 1.0]]", "H = [[0.0, 1.0], [0.0, 1.0]]"))


def test_eps0_variants(tmp_path):
    grid = TimeGrid(1.0, 4)
    cfg = parse_config(MINIMAL.replace("eta = 1.0", "eta = 1.0\neps0 = 0.25"))
    np.testing.assert_array_equal(cfg.eps0.field(grid).values, 0.25)
    csv = tmp_path / "f.csv"
    csv.write_text("t,eps\n0,1\n0.25,2\n0.5,3\n0.75,4\n")
    (tmp_path / "c.toml").write_text(MINIMAL.replace("eta = 1.0", 'eta = 1.0\neps0_file = "f.csv"'))
    cfg = load_config(tmp_path / "c.toml")
    np.testing.assert_array_equal(cfg.eps0.field(grid).values, [1, 2, 3, 4])
    with pytest.raises(Exception):
        cfg.eps0.field(TimeGrid(1.0, 5))
    with pytest.raises(ConfigError, match="not found"):
        parse_config(MINIMAL.replace("eta = 1.0", 'eta = 1.0\neps0_file = "missing.csv"'), tmp_path)
    np.testing.assert_array_equal(read_field_csv(csv), [1, 2, 3, 4])


def test_output_directory_relative_to_config(tmp_path):
    (tmp_path / "c.toml").write_text(MINIMAL + '\n[outputs]\ndirectory = "res"\n')
    assert load_config(tmp_path / "c.toml").output_dir == str(tmp_path / "res")


def test_point_name():
    assert point_name(0.5, 1.5, 30.222) == "d0.5_e1.5_a30.222"


def test_demo_configs_parse():
    from pathlib import Path

    configs = sorted((Path(__file__).parents[1] / "demos" / "configs").glob("*.toml"))
    assert len(configs) >= 4
    for path in configs:
        cfg = load_config(path)
        assert cfg.points()
