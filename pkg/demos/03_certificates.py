"""Computable certificates for a run: field bound, summability, sensitivity
estimates and the critical-point residual."""

import numpy as np

from monotonic_control import ControlField, SchemeParams, StoppingPolicy, run, two_level
from monotonic_control.analysis import (
    bound_m_for_run,
    check_bound,
    critical_residual,
    gronwall_check,
    random_bounded_field,
    summability_check,
)

problem = two_level()
params = SchemeParams(alpha=1.0, delta=1.5, eta=0.5)
report = run(problem, params, ControlField.zeros(problem.grid), StoppingPolicy(max_iters=60))

# %% Uniform bound.  All iterates stay inside a ball whose radius M depends
# only on the initial fields, alpha, the weights and ||O||, ||mu||.
M = bound_m_for_run(report)
cert = check_bound(report, M)
print(f"M = {M:.3f}; largest L2 norm / M = {cert.worst_ratio:.3f}; "
      f"largest sup norm / M = {cert.worst_sup_ratio:.3f}")

# %% Summability.  The squared field increments add up to at most the total
# gain divided by the smaller weight coefficient.
s = summability_check(report.column("J"), report.column("d_fwd_l2"), report.column("d_bwd_l2"), params)
print(f"sum of squared forward increments {s['sum_fwd']:.4f}, backward {s['sum_bwd']:.4f}, limit {s['limit']:.4f}")

# %% Sensitivity.  For two fields bounded by M, the state and adjoint
# trajectories differ by at most a constant times ||eps_a - eps_b||_1.
rng = np.random.default_rng(1)
a, b = (random_bounded_field(problem.grid, M, rng) for _ in range(2))
v = gronwall_check(problem, a, b, M)
print(f"state difference {v.observed_psi:.3e} <= {v.bound_psi:.3e}; "
      f"adjoint difference {v.observed_chi:.3e} <= {v.bound_chi:.3e}")

# %% Critical-point residual.  ||alpha eps + Im<chi|mu|psi>||_2 vanishes at a
# stationary field; it shrinks as the iteration proceeds.
for k in (0, 10, 60):
    rep = run(problem, params, ControlField.zeros(problem.grid), StoppingPolicy(max_iters=k))
    print(f"after {k:2d} iterations residual = {critical_residual(problem, rep.final.eps, 1.0):.3e}")
