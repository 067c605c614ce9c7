"""Domain types and small linear-algebra helpers.

Everything here is immutable after construction: the numpy buffers held by
the dataclasses are copied and flagged read-only, so problems, fields and
states can be shared between concurrent runs without defensive copies.

Units are atomic (hbar = 1).  Operators are dense complex matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

HERMITIAN_ATOL = 1e-12
PSD_ATOL = 1e-10
UNIT_NORM_ATOL = 1e-10


class DimensionError(ValueError):
    """Raised when operators, states or fields do not fit together."""


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Dense Hermitian matrix (used for the drift H and the dipole mu)."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"operator must be square, got shape {m.shape}")
        if m.shape[0] < 2:
            raise DimensionError("operator dimension must be at least 2")
        if not np.all(np.isfinite(m)):
            raise ValueError("operator has non-finite entries")
        err = np.max(np.abs(m - m.conj().T))
        if err > HERMITIAN_ATOL:
            raise ValueError(f"operator is not Hermitian (max |A - A^H| = {err:.3e})")
        object.__setattr__(self, "entries", _frozen(m))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            _check_dims(self.dim, other.dim)
            return self.entries @ other.amplitudes
        return self.entries @ other


@dataclass(frozen=True, eq=False)
class ObservableOperator(HermitianOperator):
    """Hermitian, positive semi-definite target observable O."""

    def __post_init__(self):
        super().__post_init__()
        lowest = np.linalg.eigvalsh(self.entries)[0]
        if lowest < -PSD_ATOL:
            raise ValueError(
                f"observable must be positive semi-definite (lowest eigenvalue {lowest:.3e})"
            )


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitude vector.

    ``normalized=True`` marks a physical state psi and enforces unit norm.
    Adjoint states chi carry ``normalized=False``: their norm is ||O psi(T)||.
    """

    amplitudes: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=np.complex128)
        if v.ndim != 1:
            raise DimensionError(f"state must be a vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("state has non-finite amplitudes")
        if self.normalized:
            norm = np.linalg.norm(v)
            if abs(norm - 1.0) > UNIT_NORM_ATOL:
                raise ValueError(f"state is not normalized (norm = {norm!r})")
        object.__setattr__(self, "amplitudes", _frozen(v))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = j*dt on [0, T], j = 0..n_steps."""

    T: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"final time must be positive, got {self.T!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class ControlField:
    """Real control, piecewise constant: ``values[j]`` holds on [t_j, t_{j+1}).

    With this convention the discrete norms are exact integrals of the
    step function, not quadrature approximations.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n_steps,):
            raise DimensionError(
                f"field needs {self.grid.n_steps} interval values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("control field has non-finite values")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "ControlField":
        return cls(grid, np.zeros(grid.n_steps))

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "ControlField":
        return cls(grid, np.full(grid.n_steps, float(value)))

    @property
    def norm_l2(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) * self.grid.dt))

    @property
    def norm_l1(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.grid.dt)

    @property
    def norm_sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def fluence(self) -> float:
        """Integral of eps(t)**2 over [0, T]."""
        return float(np.sum(self.values**2) * self.grid.dt)

    def distance_l2(self, other: "ControlField") -> float:
        _check_grid(self.grid, other.grid)
        return float(np.sqrt(np.sum((self.values - other.values) ** 2) * self.grid.dt))

    def __sub__(self, other: "ControlField") -> "ControlField":
        _check_grid(self.grid, other.grid)
        return ControlField(self.grid, self.values - other.values)


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """One optimization instance: drift H, dipole mu, target O, psi0, grid."""

    H: HermitianOperator
    mu: HermitianOperator
    O: ObservableOperator
    psi0: StateVector
    grid: TimeGrid
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.O, ObservableOperator):
            raise TypeError("O must be an ObservableOperator")
        if not self.psi0.normalized:
            raise ValueError("psi0 must be a normalized state")
        dims = {self.H.dim, self.mu.dim, self.O.dim, self.psi0.dim}
        if len(dims) != 1:
            raise DimensionError(
                f"dimension mismatch: H {self.H.dim}, mu {self.mu.dim}, "
                f"O {self.O.dim}, psi0 {self.psi0.dim}"
            )

    @property
    def dim(self) -> int:
        return self.psi0.dim

    def with_grid(self, grid: TimeGrid) -> "ControlProblem":
        return ControlProblem(self.H, self.mu, self.O, self.psi0, grid, dict(self.metadata))


@dataclass(frozen=True)
class SchemeParams:
    """Penalty ``alpha`` and the two relaxation weights of the monotonic family.

    delta weighs the forward (state) update and eta the backward (adjoint)
    update.  (delta, eta) = (1, 0) is Krotov's scheme, (1, 1) Zhu-Rabitz.
    """

    alpha: float
    delta: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "delta", "eta"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if not 0.0 <= self.delta <= 2.0:
            raise ValueError(f"delta must lie in [0, 2], got {self.delta!r}")
        if not 0.0 <= self.eta <= 2.0:
            raise ValueError(f"eta must lie in [0, 2], got {self.eta!r}")

    @property
    def lam(self) -> float:
        """Contraction factor (1 - delta)(1 - eta) of the field recursion."""
        return (1.0 - self.delta) * (1.0 - self.eta)


def _check_dims(*dims: int) -> None:
    if len(set(dims)) != 1:
        raise DimensionError(f"dimension mismatch: {dims}")


def _check_grid(a: TimeGrid, b: TimeGrid) -> None:
    if a != b:
        raise DimensionError(f"time grids differ: {a} vs {b}")


def _as_array(x) -> np.ndarray:
    if isinstance(x, StateVector):
        return x.amplitudes
    if isinstance(x, HermitianOperator):
        return x.entries
    return np.asarray(x, dtype=np.complex128)


def operator_norm(op) -> float:
    """Spectral norm of a Hermitian operator (largest |eigenvalue|)."""
    m = _as_array(op)
    return float(np.max(np.abs(np.linalg.eigvalsh(m))))


def observable_expectation(psi, O) -> float:
    """Return Re <psi|O|psi>; the imaginary part must vanish for Hermitian O."""
    v, m = _as_array(psi), _as_array(O)
    _check_dims(v.shape[0], m.shape[0])
    value = np.vdot(v, m @ v)
    scale = max(1.0, float(np.vdot(v, v).real) * float(np.max(np.abs(m))))
    if abs(value.imag) > HERMITIAN_ATOL * scale:
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def coupling_term(chi, mu, psi) -> float:
    """Return Im <chi|mu|psi> with the first argument conjugated."""
    c, m, p = _as_array(chi), _as_array(mu), _as_array(psi)
    _check_dims(c.shape[0], m.shape[0], p.shape[0])
    return float(np.vdot(c, m @ p).imag)
