"""Compiled inner loops for Cayley stepping and the coupled update sweeps.

All routines work on raw complex128 arrays.  The Cayley step for
A = H - e*mu and signed step ``dt`` is written as

    x = (I + i dt/2 A)^{-1} v,      v_next = 2 x - v

which is algebraically (I + i dt/2 A)^{-1} (I - i dt/2 A) v.  The auxiliary
vector ``x`` is the average (v + v_next) / 2, i.e. the interval midpoint
state used by the midpoint field-update rule.

Sweep status codes: 0 ok, 1 non-finite field value, 2 implicit field
update did not converge (alpha too small for the time step).
"""

import numpy as np
from numba import njit

RULE_MIDPOINT = 0
RULE_CAUSAL = 1

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_NO_CONVERGENCE = 2

_MAX_INNER = 200
_INNER_RTOL = 1e-14


@njit(cache=True)
def bandwidth(H, mu):
    """Largest |i - j| with a non-zero entry in H or mu."""
    n = H.shape[0]
    b = 0
    for i in range(n):
        for j in range(n):
            if (H[i, j] != 0.0 or mu[i, j] != 0.0) and abs(i - j) > b:
                b = abs(i - j)
    return b


@njit(cache=True)
def _solve_into(A, b, x, bw):
    # Gaussian elimination with partial pivoting restricted to the band:
    # lower bandwidth bw, upper bandwidth 2*bw after pivoting fill-in.
    # Entries outside the band are exact zeros, so this performs the same
    # floating-point operations as the dense algorithm.  Destroys A.
    n = A.shape[0]
    for i in range(n):
        x[i] = b[i]
    for k in range(n):
        lo_end = min(n, k + bw + 1)
        up_end = min(n, k + 2 * bw + 1)
        p = k
        best = abs(A[k, k])
        for i in range(k + 1, lo_end):
            a = abs(A[i, k])
            if a > best:
                best = a
                p = i
        if best == 0.0:
            return False
        if p != k:
            for j in range(k, up_end):
                tmp = A[k, j]
                A[k, j] = A[p, j]
                A[p, j] = tmp
            tmp = x[k]
            x[k] = x[p]
            x[p] = tmp
        piv = A[k, k]
        for i in range(k + 1, lo_end):
            f = A[i, k] / piv
            if f != 0.0:
                for j in range(k + 1, up_end):
                    A[i, j] -= f * A[k, j]
                x[i] -= f * x[k]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, min(n, i + 2 * bw + 1)):
            s -= A[i, j] * x[j]
        x[i] = s / A[i, i]
    return True


@njit(cache=True)
def half_solve(H, mu, e, dt, v, work, x, bw):
    """x <- (I + i dt/2 (H - e mu))^{-1} v for operators of bandwidth ``bw``."""
    n = H.shape[0]
    h = 0.5 * dt
    for i in range(n):
        for j in range(max(0, i - bw), min(n, i + 2 * bw + 1)):
            if j - i <= bw:
                work[i, j] = 1j * h * (H[i, j] - e * mu[i, j])
            else:
                work[i, j] = 0.0
        work[i, i] += 1.0
    ok = _solve_into(work, v, x, bw)
    if not ok:
        raise ZeroDivisionError("singular Cayley system")


@njit(cache=True)
def im_coupling(chi, mu, psi, bw):
    """Im <chi|mu|psi> for mu of bandwidth at most ``bw``."""
    n = mu.shape[0]
    acc = 0.0 + 0.0j
    for i in range(n):
        s = 0.0 + 0.0j
        for j in range(max(0, i - bw), min(n, i + bw + 1)):
            s += mu[i, j] * psi[j]
        acc += np.conj(chi[i]) * s
    return acc.imag


@njit(cache=True)
def cayley_step(H, mu, e, dt, v):
    n = H.shape[0]
    work = np.empty((n, n), np.complex128)
    x = np.empty(n, np.complex128)
    half_solve(H, mu, e, dt, v, work, x, bandwidth(H, mu))
    return 2.0 * x - v


@njit(cache=True)
def propagate(H, mu, values, start, dt, backward):
    n_steps = values.shape[0]
    n = H.shape[0]
    out = np.empty((n_steps + 1, n), np.complex128)
    work = np.empty((n, n), np.complex128)
    x = np.empty(n, np.complex128)
    bw = bandwidth(H, mu)
    if not backward:
        out[0] = start
        for j in range(n_steps):
            half_solve(H, mu, values[j], dt, out[j], work, x, bw)
            out[j + 1] = 2.0 * x - out[j]
    else:
        out[n_steps] = start
        for j in range(n_steps - 1, -1, -1):
            half_solve(H, mu, values[j], -dt, out[j + 1], work, x, bw)
            out[j] = 2.0 * x - out[j + 1]
    return out


@njit(cache=True)
def forward_sweep(H, mu, psi0, eps_tilde_prev, chi_prev, dt, alpha, delta, rule):
    """Forward state sweep with the coupled update of the field.

    Returns (eps, psi, status, bad_index, max_inner_iterations).
    """
    n_steps = eps_tilde_prev.shape[0]
    n = H.shape[0]
    eps = np.zeros(n_steps)
    psi = np.zeros((n_steps + 1, n), np.complex128)
    work = np.empty((n, n), np.complex128)
    x = np.empty(n, np.complex128)
    bw = bandwidth(H, mu)
    chibar = np.empty(n, np.complex128)
    psi[0] = psi0
    g = delta / alpha
    max_inner = 0
    for j in range(n_steps):
        base = (1.0 - delta) * eps_tilde_prev[j]
        if delta == 0.0:
            e = base
            half_solve(H, mu, e, dt, psi[j], work, x, bw)
        elif rule == RULE_CAUSAL:
            e = base - g * im_coupling(chi_prev[j], mu, psi[j], bw)
            if not np.isfinite(e):
                return eps, psi, STATUS_NONFINITE, j, max_inner
            half_solve(H, mu, e, dt, psi[j], work, x, bw)
        else:
            for i in range(n):
                chibar[i] = 0.5 * (chi_prev[j, i] + chi_prev[j + 1, i])
            # causal value as starting guess, then fixed point on the midpoint state
            e = base - g * im_coupling(chibar, mu, psi[j], bw)
            converged = False
            for it in range(_MAX_INNER):
                if not np.isfinite(e):
                    return eps, psi, STATUS_NONFINITE, j, max_inner
                half_solve(H, mu, e, dt, psi[j], work, x, bw)
                e_new = base - g * im_coupling(chibar, mu, x, bw)
                if abs(e_new - e) <= _INNER_RTOL * (1.0 + abs(e)):
                    if it + 1 > max_inner:
                        max_inner = it + 1
                    converged = True
                    break
                e = e_new
            if not converged:
                return eps, psi, STATUS_NO_CONVERGENCE, j, _MAX_INNER
        eps[j] = e
        for i in range(n):
            psi[j + 1, i] = 2.0 * x[i] - psi[j, i]
    return eps, psi, STATUS_OK, -1, max_inner


@njit(cache=True)
def backward_sweep(H, mu, O, eps, psi, dt, alpha, eta, rule):
    """Backward adjoint sweep from chi(T) = O psi(T) with the coupled update.

    Returns (eps_tilde, chi, status, bad_index, max_inner_iterations).
    """
    n_steps = eps.shape[0]
    n = H.shape[0]
    eps_tilde = np.zeros(n_steps)
    chi = np.zeros((n_steps + 1, n), np.complex128)
    work = np.empty((n, n), np.complex128)
    x = np.empty(n, np.complex128)
    bw = bandwidth(H, mu)
    psibar = np.empty(n, np.complex128)
    chi[n_steps] = O @ psi[n_steps]
    g = eta / alpha
    max_inner = 0
    for j in range(n_steps - 1, -1, -1):
        base = (1.0 - eta) * eps[j]
        if eta == 0.0:
            e = base
            half_solve(H, mu, e, -dt, chi[j + 1], work, x, bw)
        elif rule == RULE_CAUSAL:
            e = base - g * im_coupling(chi[j + 1], mu, psi[j + 1], bw)
            if not np.isfinite(e):
                return eps_tilde, chi, STATUS_NONFINITE, j, max_inner
            half_solve(H, mu, e, -dt, chi[j + 1], work, x, bw)
        else:
            for i in range(n):
                psibar[i] = 0.5 * (psi[j, i] + psi[j + 1, i])
            e = base - g * im_coupling(chi[j + 1], mu, psibar, bw)
            converged = False
            for it in range(_MAX_INNER):
                if not np.isfinite(e):
                    return eps_tilde, chi, STATUS_NONFINITE, j, max_inner
                half_solve(H, mu, e, -dt, chi[j + 1], work, x, bw)
                e_new = base - g * im_coupling(x, mu, psibar, bw)
                if abs(e_new - e) <= _INNER_RTOL * (1.0 + abs(e)):
                    if it + 1 > max_inner:
                        max_inner = it + 1
                    converged = True
                    break
                e = e_new
            if not converged:
                return eps_tilde, chi, STATUS_NO_CONVERGENCE, j, _MAX_INNER
        eps_tilde[j] = e
        for i in range(n):
            chi[j, i] = 2.0 * x[i] - chi[j + 1, i]
    return eps_tilde, chi, STATUS_OK, -1, max_inner
