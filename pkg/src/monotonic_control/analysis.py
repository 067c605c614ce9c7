"""Certificates computed from finished runs and from the closed-form bounds.

The array-level checks (``monotonicity_check``, ``gain_identity_check``,
``summability_check``, ``vanishing_increments_check``) take plain sequences,
so the same code validates an in-memory :class:`RunReport` and a trace read
back from CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    ControlField,
    ControlProblem,
    DimensionError,
    SchemeParams,
    operator_norm,
)
from .propagator import propagate_fixed

MONOTONICITY_RTOL = 1e-8
GAIN_IDENTITY_ATOL = 1e-6
SUMMABILITY_ATOL = 1e-6
SINGLETON_THRESHOLD = 1e-8


class BoundUndefinedError(ValueError):
    """The bound M has no finite value at delta = 2 or eta = 2."""


class ThresholdOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class BoundCertificate:
    M: float
    checked_l2: bool
    checked_sup: bool
    worst_ratio: float
    worst_sup_ratio: float


@dataclass(frozen=True)
class LimitSetDiagnostics:
    window: int
    tail_diameter_l2: float
    max_consecutive_gap: float
    J_spread: float
    singleton_verdict: bool


@dataclass(frozen=True)
class GronwallVerdict:
    observed_psi: float
    bound_psi: float
    observed_chi: float
    bound_chi: float
    passed_psi: bool
    passed_chi: bool

    @property
    def passed(self) -> bool:
        return self.passed_psi and self.passed_chi


def bound_m(
    params: SchemeParams, norm_O: float, norm_mu: float, eps0_l2: float, eps_tilde0_l2: float
) -> float:
    """Uniform bound on the iterates' norms.

    M = max(||eps0||, ||eps_tilde0||, max(1, d/(2-d), e/(2-e)) ||O|| ||mu|| / alpha)
    """
    d, e = params.delta, params.eta
    if d >= 2.0 or e >= 2.0:
        raise BoundUndefinedError(
            f"bound undefined at the endpoint (delta={d!r}, eta={e!r}); needs delta, eta < 2"
        )
    factor = max(1.0, d / (2.0 - d), e / (2.0 - e))
    return max(eps0_l2, eps_tilde0_l2, factor * norm_O * norm_mu / params.alpha)


def bound_m_for_run(report) -> float:
    """bound_m using the operator norms and iterate-0 fields of ``report``."""
    first = report.records[0]
    return bound_m(
        report.params,
        operator_norm(report.problem.O),
        operator_norm(report.problem.mu),
        first.eps_l2,
        first.eps_tilde_l2,
    )


def check_bound(report, M: float) -> BoundCertificate:
    """Compare every recorded ||eps^k|| and ||eps_tilde^k|| (L2 and sup) with M."""
    if not report.records:
        raise ValueError("report has no iterations")
    l2 = np.concatenate([report.column("eps_l2"), report.column("eps_tilde_l2")])
    sup = np.concatenate([report.column("eps_sup"), report.column("eps_tilde_sup")])
    return bound_certificate(l2, sup, M)


def bound_certificate(l2_norms, sup_norms, M: float) -> BoundCertificate:
    l2 = np.asarray(l2_norms, dtype=float)
    sup = np.asarray(sup_norms, dtype=float)
    worst = float(np.max(l2) / M)
    worst_sup = float(np.max(sup) / M)
    return BoundCertificate(
        M=float(M),
        checked_l2=bool(np.all(l2 <= M)),
        checked_sup=bool(np.all(sup <= M)),
        worst_ratio=worst,
        worst_sup_ratio=worst_sup,
    )


def alpha_threshold(norm_O: float, norm_mu: float, T: float, M: float) -> float:
    """Penalty above which the Krotov iteration has a single limit point.

    alpha* = ||O|| ||mu||^2 T^2 (1 + exp(T ||mu|| M)) exp(2 T ||mu|| M)
    """
    for name, value in (("norm_O", norm_O), ("norm_mu", norm_mu), ("T", T), ("M", M)):
        if not (np.isfinite(value) and value >= 0):
            raise ValueError(f"{name} must be a non-negative real, got {value!r}")
    x = T * norm_mu * M
    try:
        value = norm_O * norm_mu**2 * T**2 * (1.0 + math.exp(x)) * math.exp(2.0 * x)
    except OverflowError:
        value = math.inf
    if not math.isfinite(value):
        raise ThresholdOverflowError(
            f"threshold exceeds representable range (T*||mu||*M = {x:.6g})"
        )
    return value


def _coupling_series(chi_states: np.ndarray, mu: np.ndarray, psi_states: np.ndarray) -> np.ndarray:
    return np.einsum("ji,ik,jk->j", chi_states.conj(), mu, psi_states).imag


def critical_residual(
    problem: ControlProblem, field: ControlField, alpha: float, rule: str = "midpoint"
) -> float:
    """L2 norm of alpha*eps + Im<chi|mu|psi> with psi, chi both driven by ``field``.

    With ``rule="midpoint"`` the coupling is taken on interval averages; this
    is half the gradient of the discrete cost, so it vanishes exactly at
    discrete critical points.  ``rule="causal"`` samples the left nodes.
    """
    psi = propagate_fixed(problem, field)
    chi = propagate_fixed(problem, field, terminal=problem.O @ psi.final)
    if rule == "midpoint":
        c = _coupling_series(chi.midpoints(), problem.mu.entries, psi.midpoints())
    elif rule == "causal":
        c = _coupling_series(chi.states[:-1], problem.mu.entries, psi.states[:-1])
    else:
        raise ValueError(f"unknown rule {rule!r}")
    r = alpha * field.values + c
    return float(np.sqrt(np.sum(r**2) * problem.grid.dt))


def gronwall_bounds(norm_O: float, norm_mu: float, T: float, M: float, l1_distance: float):
    """Closed-form state and adjoint sensitivity bounds for fields bounded by M."""
    growth = math.exp(T * norm_mu * M)
    bound_psi = norm_mu * T * growth * l1_distance
    bound_chi = norm_O * norm_mu * T * (1.0 + growth) * growth * l1_distance
    return bound_psi, bound_chi


def gronwall_check(
    problem: ControlProblem, field_a: ControlField, field_b: ControlField, M: float
) -> GronwallVerdict:
    """Compare observed max_t ||d psi(t)|| and ||d chi(t)|| with the Gronwall bounds."""
    if field_a.grid != problem.grid or field_b.grid != problem.grid:
        raise DimensionError("fields must live on the problem grid")
    for name, f in (("field_a", field_a), ("field_b", field_b)):
        if f.norm_sup > M:
            raise ValueError(f"{name} exceeds M pointwise ({f.norm_sup!r} > {M!r})")
    psi_a = propagate_fixed(problem, field_a)
    psi_b = propagate_fixed(problem, field_b)
    chi_a = propagate_fixed(problem, field_a, terminal=problem.O @ psi_a.final)
    chi_b = propagate_fixed(problem, field_b, terminal=problem.O @ psi_b.final)
    obs_psi = float(np.max(np.linalg.norm(psi_a.states - psi_b.states, axis=1)))
    obs_chi = float(np.max(np.linalg.norm(chi_a.states - chi_b.states, axis=1)))
    bound_psi, bound_chi = gronwall_bounds(
        operator_norm(problem.O),
        operator_norm(problem.mu),
        problem.grid.T,
        M,
        (field_a - field_b).norm_l1,
    )
    return GronwallVerdict(
        observed_psi=obs_psi,
        bound_psi=bound_psi,
        observed_chi=obs_chi,
        bound_chi=bound_chi,
        passed_psi=obs_psi <= bound_psi,
        passed_chi=obs_chi <= bound_chi,
    )


def random_bounded_field(grid, M: float, rng: np.random.Generator, n_modes: int = 6) -> ControlField:
    """Smooth random field (sum of sines) scaled to a random sup-norm in (0, M]."""
    t = (np.arange(grid.n_steps) + 0.5) * grid.dt
    coeffs = rng.normal(size=n_modes)
    phases = rng.uniform(0.0, 2 * np.pi, size=n_modes)
    freqs = np.arange(1, n_modes + 1) * np.pi / grid.T
    values = np.sin(np.outer(t, freqs) + phases) @ coeffs
    peak = np.max(np.abs(values))
    scale = rng.uniform(0.05, 1.0) * M / peak if peak > 0 else 0.0
    return ControlField(grid, values * scale)


def limit_set_diagnostics(
    report, singleton_threshold: float = SINGLETON_THRESHOLD, window: Optional[int] = None
) -> LimitSetDiagnostics:
    """Diameter, e-string granularity and J spread over the retained tail."""
    tail = list(report.tail)
    if window is not None:
        tail = tail[-window:]
    if len(tail) < 2:
        raise ValueError("limit-set diagnostics need at least two tail iterates")
    fields = np.stack([entry.eps.values for entry in tail])
    dt = tail[0].eps.grid.dt
    diffs = fields[:, None, :] - fields[None, :, :]
    dist = np.sqrt(np.sum(diffs**2, axis=2) * dt)
    gaps = np.diagonal(dist, offset=1)
    J = np.array([entry.J for entry in tail])
    diameter = float(np.max(dist))
    return LimitSetDiagnostics(
        window=len(tail),
        tail_diameter_l2=diameter,
        max_consecutive_gap=float(np.max(gaps)),
        J_spread=float(np.max(J) - np.min(J)),
        singleton_verdict=diameter < singleton_threshold,
    )


def monotonicity_check(J: Sequence[float], rtol: float = MONOTONICITY_RTOL) -> dict:
    """J^{k+1} >= J^k - rtol * max(1, |J^k|) for every step."""
    J = np.asarray(J, dtype=float)
    if J.size < 2:
        return {"passed": True, "worst_relative_step": 0.0, "steps": 0}
    rel = np.diff(J) / np.maximum(1.0, np.abs(J[:-1]))
    worst = float(np.min(rel))
    return {"passed": bool(worst >= -rtol), "worst_relative_step": worst, "steps": int(rel.size)}


def gain_identity_check(residuals: Sequence[float], atol: float = GAIN_IDENTITY_ATOL) -> dict:
    r = np.asarray(residuals, dtype=float)
    r = r[np.isfinite(r)]
    worst = float(np.max(np.abs(r))) if r.size else 0.0
    return {"passed": bool(worst < atol), "max_abs_residual": worst, "atol": atol}


def gain_coefficients(params: SchemeParams):
    """(2/delta - 1, 2/eta - 1), with 0 reported for a zero weight."""
    fwd = 2.0 / params.delta - 1.0 if params.delta > 0 else 0.0
    bwd = 2.0 / params.eta - 1.0 if params.eta > 0 else 0.0
    return fwd, bwd


def summability_check(
    J: Sequence[float],
    d_fwd_l2: Sequence[float],
    d_bwd_l2: Sequence[float],
    params: SchemeParams,
    atol: float = SUMMABILITY_ATOL,
) -> dict:
    """Partial sums of squared increments against the total gain.

    Each of sum ||eps^{k+1} - eps_tilde^k||^2 and sum ||eps_tilde^k - eps^k||^2
    must stay below (J_final - J_0) / (alpha * c) with c the smaller of the
    coefficients 2/delta - 1, 2/eta - 1 that apply.  A series is only
    controlled when its weight lies strictly inside (0, 2); the check is not
    applicable when neither does.
    """
    fwd_ok = 0.0 < params.delta < 2.0
    bwd_ok = 0.0 < params.eta < 2.0
    if not (fwd_ok or bwd_ok):
        return {"passed": True, "applicable": False}
    J = np.asarray(J, dtype=float)
    fwd = np.asarray(d_fwd_l2, dtype=float)
    bwd = np.asarray(d_bwd_l2, dtype=float)
    fwd, bwd = fwd[np.isfinite(fwd)], bwd[np.isfinite(bwd)]
    c_fwd, c_bwd = gain_coefficients(params)
    coef = min(c for c, ok in ((c_fwd, fwd_ok), (c_bwd, bwd_ok)) if ok)
    limit = (J[-1] - J[0]) / (params.alpha * coef) + atol
    sum_fwd = float(np.sum(fwd**2))
    sum_bwd = float(np.sum(bwd**2))
    passed = (not fwd_ok or sum_fwd <= limit) and (not bwd_ok or sum_bwd <= limit)
    return {
        "passed": bool(passed),
        "applicable": True,
        "sum_fwd": sum_fwd,
        "sum_bwd": sum_bwd,
        "limit": float(limit),
    }


def vanishing_increments_check(d_step: Sequence[float], window: int = 20, factor: float = 10.0) -> dict:
    """No rebound in the tail: each of the last ``window`` increments stays
    below ``factor`` times the smallest increment seen before it."""
    d = np.asarray(d_step, dtype=float)
    d = d[np.isfinite(d)]
    if d.size < 2:
        return {"passed": True, "worst_ratio": 0.0}
    running_min = np.minimum.accumulate(d)
    start = max(1, d.size - window)
    worst = 0.0
    ok = True
    for k in range(start, d.size):
        prior = running_min[k - 1]
        if d[k] > factor * prior:
            ok = False
        if prior > 0:
            worst = max(worst, d[k] / prior)
        elif d[k] > 0:
            worst = math.inf
    return {"passed": ok, "worst_ratio": float(worst), "final": float(d[-1])}
