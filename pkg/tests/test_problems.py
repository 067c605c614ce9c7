import math

import numpy as np
import pytest

from monotonic_control.core import ControlField, coupling_term, observable_expectation, operator_norm
from monotonic_control.problems import (
    ProblemSpec,
    box1d,
    dirichlet_laplacian_hamiltonian,
    ladder,
    two_level,
)
from monotonic_control.scheme import cost


def test_two_level_defaults():
    p = two_level()
    assert p.grid.T == 5.0 and p.grid.n_steps == 4000
    assert operator_norm(p.O) == operator_norm(p.mu) == pytest.approx(1.0)
    J, _ = cost(p, ControlField.zeros(p.grid), 1.0)
    assert J == pytest.approx(0.1464466, abs=1e-7)
    assert J == pytest.approx(math.sin(math.pi / 8) ** 2, abs=1e-12)


def test_two_level_at_target():
    p = two_level(theta=math.pi / 2, n_steps=200)
    J, _ = cost(p, ControlField.zeros(p.grid), 1.0)
    assert J == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("theta", [0.0, -0.1, 2.0])
def test_two_level_theta_range(theta):
    with pytest.raises(ValueError, match="theta"):
        two_level(theta=theta)


def test_ladder():
    p = ladder(3, n_steps=200)
    assert operator_norm(p.mu) == pytest.approx(math.sqrt(2))
    for n in (3, 5, 10):
        q = ladder(n, n_steps=100)
        assert cost(q, ControlField.zeros(q.grid), 1.0)[0] == pytest.approx(0.0, abs=1e-14)
    for bad in (2, 65, 3.5):
        with pytest.raises(ValueError):
            ladder(bad)


def test_box_spectrum_converges():
    errors = []
    for n_x in (32, 64, 128):
        _, H = dirichlet_laplacian_hamiltonian(math.pi, n_x)
        errors.append(abs(np.linalg.eigvalsh(H)[0] - 0.5))
    assert errors[-1] < 1e-4
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    np.testing.assert_allclose(ratios, 4.0, rtol=0.1)


def test_box_problem():
    p = box1d(n_x=64, n_steps=200)
    assert abs(coupling_term(p.psi0, p.mu, p.psi0)) < 1e-14
    # centred dipole: <psi0|mu|psi0> vanishes by parity
    assert abs(p.psi0.amplitudes.conj() @ (p.mu @ p.psi0)) < 1e-12
    assert observable_expectation(p.psi0, p.O) == pytest.approx(0.0, abs=1e-14)
    assert operator_norm(p.O) == pytest.approx(1.0)
    for bad in (1, 513):
        with pytest.raises(ValueError):
            box1d(n_x=bad)
    with pytest.raises(ValueError):
        box1d(L=-1.0)


def test_constructors_deterministic():
    for build in (lambda: two_level(n_steps=10), lambda: ladder(4, n_steps=10), lambda: box1d(n_x=40, n_steps=10)):
        a, b = build(), build()
        for name in ("H", "mu", "O"):
            np.testing.assert_array_equal(getattr(a, name).entries, getattr(b, name).entries)
        np.testing.assert_array_equal(a.psi0.amplitudes, b.psi0.amplitudes)


def test_problem_spec():
    p = ProblemSpec("ladder", {"n": 4, "n_steps": 50}).build()
    assert p.dim == 4
    with pytest.raises(ValueError, match="unknown problem kind"):
        ProblemSpec("three_level")
