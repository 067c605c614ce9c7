"""The monotonic (delta, eta) iteration: cost, bootstrap, one iteration, runs."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import ControlField, ControlProblem, SchemeParams, observable_expectation
from .propagator import (
    Trajectory,
    backward_sweep_with_update,
    forward_sweep_with_update,
    propagate_fixed,
)


class NonFiniteCostError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class IterateState:
    k: int
    eps: ControlField
    eps_tilde: ControlField
    psi: Trajectory
    chi: Trajectory
    J: float
    fluence: float
    observable: float


@dataclass(frozen=True)
class GainBreakdown:
    """Split of J(eps^{k+1}) - J(eps^k) into its three non-negative parts.

    ``forward_term`` is alpha (2/delta - 1) ||eps^{k+1} - eps_tilde^k||^2 and
    ``backward_term`` is alpha (2/eta - 1) ||eps_tilde^k - eps^k||^2; both are
    defined as zero when the corresponding weight is zero.
    """

    observable_term: float
    forward_term: float
    backward_term: float
    lhs: float
    identity_residual: float
    d_fwd_l2: float
    d_bwd_l2: float


@dataclass(frozen=True)
class StoppingPolicy:
    """``max_iters`` caps the loop; a tolerance of 0 disables that criterion."""

    max_iters: int = 100
    j_gain_tol: float = 0.0
    field_delta_tol: float = 0.0

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ValueError(f"max_iters must be a non-negative integer, got {self.max_iters!r}")
        for name in ("j_gain_tol", "field_delta_tol"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be a non-negative real, got {value!r}")
        object.__setattr__(self, "max_iters", int(self.max_iters))


@dataclass(frozen=True)
class IterationRecord:
    """Per-iteration numbers.

    The gain columns of record k describe the step k-1 -> k, so
    ``d_fwd_l2`` is ||eps^k - eps_tilde^{k-1}|| and ``d_bwd_l2`` is
    ||eps_tilde^{k-1} - eps^{k-1}||.  They are NaN for k = 0.
    """

    k: int
    J: float
    fluence: float
    observable: float
    eps_l2: float
    eps_sup: float
    eps_tilde_l2: float
    eps_tilde_sup: float
    d_step_l2: float
    gain: Optional[GainBreakdown]
    wall_time: float

    @property
    def d_fwd_l2(self) -> float:
        return self.gain.d_fwd_l2 if self.gain else float("nan")

    @property
    def d_bwd_l2(self) -> float:
        return self.gain.d_bwd_l2 if self.gain else float("nan")


@dataclass(frozen=True, eq=False)
class TailEntry:
    k: int
    eps: ControlField
    eps_tilde: ControlField
    J: float


@dataclass(eq=False)
class RunReport:
    problem: ControlProblem
    params: SchemeParams
    policy: StoppingPolicy
    rule: str
    records: List[IterationRecord] = field(default_factory=list)
    tail: List[TailEntry] = field(default_factory=list)
    final: Optional[IterateState] = None
    stop_reason: str = ""
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def gains(self) -> List[GainBreakdown]:
        return [r.gain for r in self.records[1:]]


def cost(problem: ControlProblem, field: ControlField, alpha: float):
    """Return (J, fluence) with J = <psi(T)|O|psi(T)> - alpha * fluence."""
    psi = propagate_fixed(problem, field)
    obs = observable_expectation(psi.final, problem.O)
    fluence = field.fluence
    return obs - alpha * fluence, fluence


def _state(problem, params, k, eps, eps_tilde, psi, chi) -> IterateState:
    obs = observable_expectation(psi.final, problem.O)
    fluence = eps.fluence
    J = obs - params.alpha * fluence
    if not np.isfinite(J):
        raise NonFiniteCostError(f"non-finite cost at iteration {k}: J={J!r}")
    return IterateState(k, eps, eps_tilde, psi, chi, J, fluence, obs)


def bootstrap(
    problem: ControlProblem, params: SchemeParams, eps0: ControlField, rule: str = "midpoint"
) -> IterateState:
    """Iterate 0: psi^0 from eps0, then one backward update sweep for (eps_tilde^0, chi^0)."""
    psi = propagate_fixed(problem, eps0)
    eps_tilde, chi = backward_sweep_with_update(problem, params, eps0, psi, rule)
    return _state(problem, params, 0, eps0, eps_tilde, psi, chi)


def _weighted_sq(weight: float, diff: ControlField, alpha: float) -> float:
    if weight == 0.0:
        return 0.0
    return alpha * (2.0 / weight - 1.0) * diff.fluence


def iterate(
    problem: ControlProblem, params: SchemeParams, prev: IterateState, rule: str = "midpoint"
):
    """One forward + backward pass; returns (next IterateState, GainBreakdown)."""
    eps, psi = forward_sweep_with_update(problem, params, prev.eps_tilde, prev.chi, rule)
    eps_tilde, chi = backward_sweep_with_update(problem, params, eps, psi, rule)
    new = _state(problem, params, prev.k + 1, eps, eps_tilde, psi, chi)

    d_psi = psi.states[-1] - prev.psi.states[-1]
    observable_term = observable_expectation(d_psi, problem.O)
    d_fwd = eps - prev.eps_tilde
    d_bwd = prev.eps_tilde - prev.eps
    forward_term = _weighted_sq(params.delta, d_fwd, params.alpha)
    backward_term = _weighted_sq(params.eta, d_bwd, params.alpha)
    lhs = new.J - prev.J
    gain = GainBreakdown(
        observable_term=observable_term,
        forward_term=forward_term,
        backward_term=backward_term,
        lhs=lhs,
        identity_residual=lhs - (observable_term + forward_term + backward_term),
        d_fwd_l2=d_fwd.norm_l2,
        d_bwd_l2=d_bwd.norm_l2,
    )
    return new, gain


def _record(state: IterateState, d_step: float, gain, wall: float) -> IterationRecord:
    return IterationRecord(
        k=state.k,
        J=state.J,
        fluence=state.fluence,
        observable=state.observable,
        eps_l2=state.eps.norm_l2,
        eps_sup=state.eps.norm_sup,
        eps_tilde_l2=state.eps_tilde.norm_l2,
        eps_tilde_sup=state.eps_tilde.norm_sup,
        d_step_l2=d_step,
        gain=gain,
        wall_time=wall,
    )


def run(
    problem: ControlProblem,
    params: SchemeParams,
    eps0: ControlField,
    policy: StoppingPolicy,
    tail_window: int = 20,
    rule: str = "midpoint",
) -> RunReport:
    """Iterate from ``eps0`` until ``policy`` fires.

    The stop reason is one of ``"max_iters"``, ``"field_delta_tol"`` or
    ``"j_gain_tol"``.  The last ``tail_window`` iterates' fields are kept in
    ``report.tail`` for limit-set diagnostics.
    """
    if tail_window < 2:
        raise ValueError("tail_window must be at least 2")
    report = RunReport(problem, params, policy, rule)
    tail = deque(maxlen=tail_window)
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    state = bootstrap(problem, params, eps0, rule)
    report.records.append(_record(state, float("nan"), None, time.perf_counter() - t0))
    tail.append(TailEntry(state.k, state.eps, state.eps_tilde, state.J))

    report.stop_reason = "max_iters"
    for _ in range(policy.max_iters):
        t0 = time.perf_counter()
        new, gain = iterate(problem, params, state, rule)
        d_step = new.eps.distance_l2(state.eps)
        report.records.append(_record(new, d_step, gain, time.perf_counter() - t0))
        tail.append(TailEntry(new.k, new.eps, new.eps_tilde, new.J))
        state = new
        if policy.field_delta_tol > 0 and d_step < policy.field_delta_tol:
            report.stop_reason = "field_delta_tol"
            break
        if policy.j_gain_tol > 0 and gain.lhs < policy.j_gain_tol:
            report.stop_reason = "j_gain_tol"
            break

    report.tail = list(tail)
    report.final = state
    report.wall_time = time.perf_counter() - t_start
    return report
