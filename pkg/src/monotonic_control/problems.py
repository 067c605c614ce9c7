"""Built-in control problems.

``two_level``
    Qubit with H = diag(0, 1), mu = sigma_x, target projector on |1>.
``ladder``
    n equally spaced levels, nearest-neighbour dipole, target the top level.
``box1d``
    Particle in a Dirichlet box [0, L] discretised by finite differences,
    driven through a centred length-gauge dipole, steered from the ground
    state towards the first excited state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from .core import (
    ControlProblem,
    HermitianOperator,
    ObservableOperator,
    StateVector,
    TimeGrid,
)

DEFAULT_THETA = math.pi / 8
DEFAULT_T = 5.0
DEFAULT_N_STEPS = 4000


def _projector(v: np.ndarray) -> np.ndarray:
    return np.outer(v, v.conj())


def two_level(theta: float = DEFAULT_THETA, T: float = DEFAULT_T, n_steps: int = DEFAULT_N_STEPS):
    """psi0 = (cos theta, sin theta); theta must lie in (0, pi/2]."""
    if not 0.0 < theta <= math.pi / 2:
        raise ValueError(f"theta must lie in (0, pi/2], got {theta!r}")
    H = np.diag([0.0, 1.0])
    mu = np.array([[0.0, 1.0], [1.0, 0.0]])
    O = np.diag([0.0, 1.0])
    psi0 = np.array([math.cos(theta), math.sin(theta)])
    return ControlProblem(
        HermitianOperator(H),
        HermitianOperator(mu),
        ObservableOperator(O),
        StateVector(psi0, normalized=True),
        TimeGrid(T, n_steps),
        {"kind": "two_level", "theta": theta},
    )


def ladder(n: int = 3, T: float = DEFAULT_T, n_steps: int = DEFAULT_N_STEPS):
    if int(n) != n or not 3 <= n <= 64:
        raise ValueError(f"ladder size must be an integer in [3, 64], got {n!r}")
    n = int(n)
    H = np.diag(np.arange(n, dtype=float))
    mu = np.eye(n, k=1) + np.eye(n, k=-1)
    O = np.zeros((n, n))
    O[-1, -1] = 1.0
    psi0 = np.zeros(n)
    psi0[0] = 1.0
    return ControlProblem(
        HermitianOperator(H),
        HermitianOperator(mu),
        ObservableOperator(O),
        StateVector(psi0, normalized=True),
        TimeGrid(T, n_steps),
        {"kind": "ladder", "n": n},
    )


def dirichlet_laplacian_hamiltonian(L: float, n_x: int):
    """Return (x, H) with H = -1/2 * (3-point Laplacian) on n_x interior points."""
    h = L / (n_x + 1)
    x = h * np.arange(1, n_x + 1)
    main = np.full(n_x, 1.0 / h**2)
    off = np.full(n_x - 1, -0.5 / h**2)
    H = np.diag(main) + np.diag(off, 1) + np.diag(off, -1)
    return x, H


def _fix_sign(v: np.ndarray) -> np.ndarray:
    # eigenvectors are defined up to sign; pin it for reproducible problems
    i = int(np.argmax(np.abs(v)))
    return v if v[i] >= 0 else -v


def box1d(L: float = math.pi, n_x: int = 64, T: float = DEFAULT_T, n_steps: int = DEFAULT_N_STEPS):
    if not (np.isfinite(L) and L > 0):
        raise ValueError(f"box length must be positive, got {L!r}")
    if int(n_x) != n_x or not 2 <= n_x <= 512:
        raise ValueError(f"n_x must be an integer in [2, 512], got {n_x!r}")
    n_x = int(n_x)
    x, H = dirichlet_laplacian_hamiltonian(L, n_x)
    _, vecs = np.linalg.eigh(H)
    ground = _fix_sign(vecs[:, 0])
    excited = _fix_sign(vecs[:, 1])
    mu = np.diag(x - L / 2)
    return ControlProblem(
        HermitianOperator(H),
        HermitianOperator(mu),
        ObservableOperator(_projector(excited)),
        StateVector(ground / np.linalg.norm(ground), normalized=True),
        TimeGrid(T, n_steps),
        {"kind": "box1d", "L": L, "n_x": n_x, "x": x},
    )


def custom(H, mu, O, psi0, T: float = DEFAULT_T, n_steps: int = DEFAULT_N_STEPS):
    psi0 = np.asarray(psi0, dtype=np.complex128)
    return ControlProblem(
        HermitianOperator(H),
        HermitianOperator(mu),
        ObservableOperator(O),
        StateVector(psi0, normalized=True),
        TimeGrid(T, n_steps),
        {"kind": "custom"},
    )


_BUILDERS = {"two_level": two_level, "ladder": ladder, "box1d": box1d, "custom": custom}


@dataclass(frozen=True)
class ProblemSpec:
    """Serializable description of a problem: a kind plus keyword arguments."""

    kind: str
    parameters: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _BUILDERS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {sorted(_BUILDERS)}")

    def build(self) -> ControlProblem:
        return _BUILDERS[self.kind](**self.parameters)
