"""Crank-Nicolson (Cayley) propagation of state and adjoint trajectories.

Two update rules couple the field to the sweep:

``"midpoint"`` (default)
    The field on interval j is computed from the interval-averaged states,
    which are exactly the Cayley half-step vectors.  The scalar equation this
    produces is solved by fixed-point iteration at every step.  With this rule
    the discrete cost obeys the gain identity to round-off, so monotonicity
    holds exactly, and fixed points are exact critical points of the
    discrete cost.

``"causal"``
    The field on [t_j, t_{j+1}) uses the states at t_j only (single explicit
    pass).  Simpler, but the gain identity then only holds to first order in
    dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    ControlField,
    ControlProblem,
    DimensionError,
    HermitianOperator,
    SchemeParams,
    StateVector,
    TimeGrid,
)

RULES = {"midpoint": _kernels.RULE_MIDPOINT, "causal": _kernels.RULE_CAUSAL}


class SweepError(RuntimeError):
    """A coupled sweep produced an unusable field value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on every node of ``grid``; ``states[j]`` is the state at t_j."""

    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.complex128)
        if s.ndim != 2 or s.shape[0] != self.grid.n_steps + 1:
            raise DimensionError(
                f"trajectory needs {self.grid.n_steps + 1} states, got shape {s.shape}"
            )
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, j) -> StateVector:
        return StateVector(self.states[j])

    @property
    def initial(self) -> StateVector:
        return StateVector(self.states[0])

    @property
    def final(self) -> StateVector:
        return StateVector(self.states[-1])

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def midpoints(self) -> np.ndarray:
        """Interval averages (v_j + v_{j+1}) / 2, shape (n_steps, dim)."""
        return 0.5 * (self.states[:-1] + self.states[1:])


def _rule_code(rule: str) -> int:
    try:
        return RULES[rule]
    except KeyError:
        raise ValueError(f"unknown update rule {rule!r}; expected one of {sorted(RULES)}")


def _check_field(problem: ControlProblem, field: ControlField) -> None:
    if field.grid != problem.grid:
        raise DimensionError(f"field grid {field.grid} does not match problem grid {problem.grid}")


def step(state, H, mu, eps_value: float, dt_signed: float) -> StateVector:
    """One Cayley step of i d/dt v = (H - eps mu) v; negative dt steps backward."""
    if not dt_signed:
        raise ValueError("dt_signed must be non-zero")
    v = state.amplitudes if isinstance(state, StateVector) else np.asarray(state, np.complex128)
    h = H.entries if isinstance(H, HermitianOperator) else np.asarray(H, np.complex128)
    m = mu.entries if isinstance(mu, HermitianOperator) else np.asarray(mu, np.complex128)
    if not (h.shape == m.shape and h.shape[0] == v.shape[0]):
        raise DimensionError("state and operators do not match")
    out = _kernels.cayley_step(
        np.ascontiguousarray(h), np.ascontiguousarray(m), float(eps_value), float(dt_signed),
        np.ascontiguousarray(v),
    )
    return StateVector(out)


def propagate_fixed(problem: ControlProblem, field: ControlField, terminal=None) -> Trajectory:
    """Propagate with a fixed field.

    Forward from psi0 when ``terminal`` is None, otherwise backward from
    the given terminal (adjoint) state at t = T.
    """
    _check_field(problem, field)
    H, mu = problem.H.entries, problem.mu.entries
    if terminal is None:
        start, backward = problem.psi0.amplitudes, False
    else:
        start = terminal.amplitudes if isinstance(terminal, StateVector) else np.asarray(terminal)
        start = np.asarray(start, dtype=np.complex128)
        if start.shape != (problem.dim,):
            raise DimensionError(f"terminal state has shape {start.shape}")
        backward = True
    states = _kernels.propagate(H, mu, field.values, start, problem.grid.dt, backward)
    return Trajectory(problem.grid, states)


def _raise_for_status(status: int, index: int, which: str, params: SchemeParams) -> None:
    if status == _kernels.STATUS_NONFINITE:
        raise SweepError(
            f"{which} sweep produced a non-finite field on interval {index} "
            f"(alpha={params.alpha!r} is likely too small for this time step)",
            index,
        )
    if status == _kernels.STATUS_NO_CONVERGENCE:
        raise SweepError(
            f"{which} sweep: implicit field update did not converge on interval {index} "
            f"(alpha={params.alpha!r} too small for this time step; refine the grid)",
            index,
        )


def forward_sweep_with_update(
    problem: ControlProblem,
    params: SchemeParams,
    eps_tilde_prev: ControlField,
    chi_prev: Trajectory,
    rule: str = "midpoint",
):
    """Forward sweep producing the new field eps^k together with psi^k.

    eps^k = (1 - delta) eps_tilde^{k-1} - (delta / alpha) Im<chi^{k-1}|mu|psi^k>,
    evaluated per interval according to ``rule``.
    """
    _check_field(problem, eps_tilde_prev)
    if chi_prev.grid != problem.grid:
        raise DimensionError("adjoint trajectory is on a different grid")
    eps, psi, status, index, _ = _kernels.forward_sweep(
        problem.H.entries, problem.mu.entries, problem.psi0.amplitudes,
        eps_tilde_prev.values, chi_prev.states, problem.grid.dt,
        params.alpha, params.delta, _rule_code(rule),
    )
    _raise_for_status(status, index, "forward", params)
    return ControlField(problem.grid, eps), Trajectory(problem.grid, psi)


def backward_sweep_with_update(
    problem: ControlProblem,
    params: SchemeParams,
    eps_current: ControlField,
    psi_current: Trajectory,
    rule: str = "midpoint",
):
    """Backward sweep from chi^k(T) = O psi^k(T) producing eps_tilde^k and chi^k.

    eps_tilde^k = (1 - eta) eps^k - (eta / alpha) Im<chi^k|mu|psi^k>.
    """
    _check_field(problem, eps_current)
    if psi_current.grid != problem.grid:
        raise DimensionError("state trajectory is on a different grid")
    eps_tilde, chi, status, index, _ = _kernels.backward_sweep(
        problem.H.entries, problem.mu.entries, problem.O.entries,
        eps_current.values, psi_current.states, problem.grid.dt,
        params.alpha, params.eta, _rule_code(rule),
    )
    _raise_for_status(status, index, "backward", params)
    return ControlField(problem.grid, eps_tilde), Trajectory(problem.grid, chi)
