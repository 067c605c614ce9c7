import csv
import json

import numpy as np
import pytest

from monotonic_control.cli import main
from monotonic_control.config import parse_config
from monotonic_control.runner import TRACE_HEADER, execute, read_trace, recheck


def write_config(tmp_path, body, name="c.toml"):
    path = tmp_path / name
    path.write_text(body)
    return path


FROZEN = """
[problem]
kind = "two_level"
n_steps = 400

[scheme]
alpha = 1.0
delta = 0.0
eta = 0.0
eps0 = 0.3

[stopping]
max_iters = 5

[checks]
enabled = ["monotonicity"]
"""

SWEEP = """
[problem]
kind = "two_level"
n_steps = 500

[scheme]
alpha = 1.0
delta = [0.5, 1.0, 1.5]
eta = [0.5, 1.0, 1.5]

[stopping]
max_iters = 15

[checks]
enabled = ["monotonicity", "bound", "gain_identity"]
"""

KROTOV = """
[problem]
kind = "two_level"
n_steps = 1000

[scheme]
alpha_threshold_factor = 2.0
threshold_M = 1.0
delta = 1.0
eta = 0.0

[stopping]
max_iters = 100
field_delta_tol = 1e-12

[checks]
enabled = ["limit_set", "residual"]
residual_tol = 1e-8
"""


def test_frozen_scheme(tmp_path):
    cfg = parse_config(FROZEN)
    assert execute(cfg, output_dir=str(tmp_path)) == 0
    trace = read_trace(tmp_path / "trace_d0_e0_a1.csv")
    assert np.all(trace["J"] == trace["J"][0])
    assert np.isnan(trace["gain_lhs"][0])
    with open(tmp_path / "trace_d0_e0_a1.csv") as fh:
        assert tuple(next(csv.reader(fh))) == TRACE_HEADER


def test_krotov_above_threshold(tmp_path):
    cfg = parse_config(KROTOV)
    assert execute(cfg, output_dir=str(tmp_path)) == 0
    [report] = list(tmp_path.glob("report_*.json"))
    doc = json.loads(report.read_text())
    assert doc["checks"]["limit_set"]["passed"] is True
    assert doc["stop_reason"] == "field_delta_tol"


def test_sweep_writes_all_points(tmp_path):
    cfg = parse_config(SWEEP)
    assert execute(cfg, workers=2, output_dir=str(tmp_path)) == 0
    assert len(list(tmp_path.glob("trace_*.csv"))) == 9
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    assert all(r["passed"] == "true" for r in rows)


def test_parallel_matches_serial(tmp_path):
    cfg = parse_config(SWEEP)
    execute(cfg, workers=1, output_dir=str(tmp_path / "a"))
    execute(cfg, workers=3, output_dir=str(tmp_path / "b"))
    for trace in (tmp_path / "a").glob("trace_*.csv"):
        assert trace.read_bytes() == (tmp_path / "b" / trace.name).read_bytes()


def test_failed_point_does_not_stop_sweep(tmp_path):
    text = SWEEP.replace("alpha = 1.0", "alpha = [1e-9, 1.0]").replace("n_steps = 500", "n_steps = 20")
    text = text.replace("delta = [0.5, 1.0, 1.5]", "delta = 1.0").replace("eta = [0.5, 1.0, 1.5]", "eta = 1.0")
    text = text.replace('[scheme]', '[scheme]\neps0 = 1.0')
    cfg = parse_config(text)
    assert execute(cfg, output_dir=str(tmp_path)) == 1
    with open(tmp_path / "summary.csv") as fh:
        rows = {r["point"]: r for r in csv.DictReader(fh)}
    assert rows["d1_e1_a1e-09"]["status"] == "failed"
    assert rows["d1_e1_a1"]["status"] == "ok"
    doc = json.loads((tmp_path / "report_d1_e1_a1e-09.json").read_text())
    assert doc["error"]


def test_recheck_agrees_and_detects_tampering(tmp_path):
    text = SWEEP.replace("delta = [0.5, 1.0, 1.5]", "delta = 1.0").replace("eta = [0.5, 1.0, 1.5]", "eta = 1.0")
    text = text.replace(
        'enabled = ["monotonicity", "bound", "gain_identity"]',
        'enabled = ["monotonicity", "bound", "gain_identity", "summability", "gronwall", '
        '"residual", "limit_set", "alpha_threshold"]\ngronwall_pairs = 3',
    )
    execute(parse_config(text), output_dir=str(tmp_path))
    trace, report = tmp_path / "trace_d1_e1_a1.csv", tmp_path / "report_d1_e1_a1.json"
    result = recheck(trace, report)
    assert result["agrees"], result
    assert set(result["checks"]) == {
        "monotonicity", "bound", "gain_identity", "summability", "gronwall", "residual", "limit_set",
        "alpha_threshold",
    }

    rows = trace.read_text().splitlines()
    fields = rows[5].split(",")
    fields[1] = "-5"
    rows[5] = ",".join(fields)
    trace.write_text("\n".join(rows) + "\n")
    result = recheck(trace, report)
    assert result["checks"]["monotonicity"]["passed"] is False
    assert not result["agrees"]


def test_cli_run_and_check(tmp_path, capsys):
    path = write_config(tmp_path, FROZEN + '\n[outputs]\ndirectory = "out"\n')
    assert main(["run", str(path)]) == 0
    out = tmp_path / "out"
    assert (out / "summary.csv").exists()
    assert main(["check", str(out / "trace_d0_e0_a1.csv"), str(out / "report_d0_e0_a1.json")]) == 0
    assert "monotonicity" in capsys.readouterr().out
    assert main(["run", str(path), "--output-dir", str(tmp_path / "other"), "--workers", "1"]) == 0
    assert (tmp_path / "other" / "trace_d0_e0_a1.csv").exists()


def test_cli_bad_config(tmp_path, capsys):
    path = write_config(tmp_path, FROZEN.replace("delta = 0.0", "delta = 2.5"))
    assert main(["run", str(path)]) == 2
    assert "[0, 2]" in capsys.readouterr().err
    assert main(["run", str(path), "--workers", "0"]) == 2


def test_cli_threshold(capsys):
    assert main(["threshold", "--T", "1", "--n-steps", "200", "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["bound_m"] == 1.0
    assert out["alpha_threshold"] == pytest.approx(27.474593, abs=1e-6)
    assert main(["threshold", "--delta", "2", "--eta", "1"]) == 2
