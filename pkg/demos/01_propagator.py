"""Crank-Nicolson (Cayley) propagation of i d/dt psi = (H - eps(t) mu) psi.

Run with ``python demos/01_propagator.py``.
"""

import numpy as np

from monotonic_control import ControlField, StateVector, propagate_fixed, step
from monotonic_control.problems import custom, two_level

H = np.diag([0.0, 1.0])
mu = np.array([[0.0, 1.0], [1.0, 0.0]])

# %% A single step.  For a diagonal generator the step is a pure phase
# (1 - i dt/2 E) / (1 + i dt/2 E), close to but not equal to exp(-i dt E).
out = step(StateVector([0.0, 1.0]), H, np.zeros((2, 2)), 0.0, 0.1)
print("phase of one step:", np.angle(out.amplitudes[1]), " exact:", -0.1)

# %% Second order in time.  With a constant field the exact propagator is a
# matrix exponential; halving dt should cut the error by four.
w, V = np.linalg.eigh(H - 1.0 * mu)
exact = V @ (np.exp(-1j * w) * V.conj()[0])
previous = None
print("\n n_steps   error        ratio")
for n in (250, 500, 1000, 2000):
    p = custom(H, mu, np.diag([0.0, 1.0]), [1.0, 0.0], T=1.0, n_steps=n)
    psi = propagate_fixed(p, ControlField.constant(p.grid, 1.0))
    err = np.linalg.norm(psi.final.amplitudes - exact)
    ratio = previous / err if previous else float("nan")
    print(f"{n:8d}   {err:.3e}    {ratio:.3f}")
    previous = err

# %% Unitarity.  The Cayley map is exactly unitary, so only round-off drifts.
p = two_level(T=100.0, n_steps=100_000)
rng = np.random.default_rng(0)
field = ControlField(p.grid, rng.normal(size=p.grid.n_steps))
psi = propagate_fixed(p, field)
print("\nmax |1 - ||psi(t)||| over 1e5 steps:", np.max(np.abs(psi.norms() - 1)))

# %% Backward propagation with the same field undoes the forward one.
back = propagate_fixed(p, field, terminal=psi.final)
print("reversibility error:", np.linalg.norm(back.initial.amplitudes - p.psi0.amplitudes))
