"""Convergence of the Krotov iteration for large penalties.

Above an explicit threshold alpha*(||O||, ||mu||, T, M) the iterates of the
(delta, eta) = (1, 0) scheme converge to a single critical field.  Below it
the theory only guarantees that the limit points form a connected set of
critical points on which J is constant.
"""

from monotonic_control import ControlField, SchemeParams, StoppingPolicy, run, two_level
from monotonic_control.analysis import alpha_threshold, critical_residual, limit_set_diagnostics

problem = two_level(T=1.0)
threshold = alpha_threshold(1.0, 1.0, 1.0, 1.0)
print(f"alpha* for ||O|| = ||mu|| = T = M = 1: {threshold:.4f}")

# %% Above the threshold: the increments collapse and the tail of the run is a
# single point.
alpha = 1.1 * threshold
report = run(problem, SchemeParams(alpha, 1.0, 0.0), ControlField.zeros(problem.grid), StoppingPolicy(max_iters=200))
steps = report.column("d_step_l2")
print("first increments:", " ".join(f"{d:.1e}" for d in steps[1:10]))
diag = limit_set_diagnostics(report)
print(f"tail diameter {diag.tail_diameter_l2:.1e}, J spread {diag.J_spread:.1e}, "
      f"singleton {diag.singleton_verdict}")
print(f"critical residual {critical_residual(problem, report.final.eps, alpha):.1e}")

# %% Below the threshold (alpha = 1 on the default T = 5 problem) the method
# still converges in practice.  Stopping on a field-increment tolerance tau
# leaves a residual of the same order as tau.
problem = two_level()
for tau in (1e-6, 1e-8, 1e-10):
    rep = run(problem, SchemeParams(1.0, 1.0, 0.0), ControlField.zeros(problem.grid),
              StoppingPolicy(max_iters=1000, field_delta_tol=tau))
    res = critical_residual(problem, rep.final.eps, 1.0)
    print(f"tau = {tau:.0e}: stopped after {rep.iterations} iterations, residual {res:.2e}")
