import numpy as np
import pytest

from monotonic_control.core import (
    ControlField,
    ControlProblem,
    DimensionError,
    HermitianOperator,
    ObservableOperator,
    SchemeParams,
    StateVector,
    TimeGrid,
    coupling_term,
)
from monotonic_control.problems import custom, two_level
from monotonic_control.propagator import (
    SweepError,
    Trajectory,
    backward_sweep_with_update,
    forward_sweep_with_update,
    propagate_fixed,
    step,
)

H2 = np.diag([0.0, 1.0])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def qubit(psi0=(1.0, 0.0), T=1.0, n_steps=1000, O=None):
    return custom(H2, SX, np.diag([0.0, 1.0]) if O is None else O, psi0, T, n_steps)


def exact_terminal(H, mu, c, T, psi0):
    # eigendecomposition oracle for a constant field
    w, V = np.linalg.eigh(H - c * mu)
    return V @ (np.exp(-1j * w * T) * (V.conj().T @ psi0))


class TestStep:
    def test_diagonal_phase(self):
        out = step(StateVector([0.0, 1.0]), H2, np.zeros((2, 2)), 0.0, 0.1)
        expected = (1 - 0.05j) / (1 + 0.05j)
        assert out.amplitudes[0] == 0
        assert out.amplitudes[1] == pytest.approx(expected, abs=1e-15)
        assert np.angle(expected) == pytest.approx(-0.0999167, abs=1e-7)

    def test_forward_then_backward_is_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = rng.normal(size=2) + 1j * rng.normal(size=2)
            e, dt = rng.normal(), rng.uniform(0.01, 0.5)
            back = step(step(StateVector(v), H2, SX, e, dt), H2, SX, e, -dt)
            np.testing.assert_allclose(back.amplitudes, v, atol=1e-12)

    def test_zero_dt_rejected(self):
        with pytest.raises(ValueError):
            step(StateVector([1, 0]), H2, SX, 0.0, 0.0)


class TestPropagateFixed:
    def test_stationary_eigenstate(self):
        p = qubit()
        traj = propagate_fixed(p, ControlField.zeros(p.grid))
        np.testing.assert_allclose(traj.states, np.tile([1.0, 0.0], (p.grid.n_steps + 1, 1)), atol=1e-12)

    def test_zero_terminal_gives_zero_adjoint(self):
        p = qubit()
        traj = propagate_fixed(p, ControlField.constant(p.grid, 0.7), terminal=StateVector([0, 0]))
        assert np.all(traj.states == 0)

    def test_matches_matrix_exponential(self):
        p = qubit(T=1.0, n_steps=2000)
        traj = propagate_fixed(p, ControlField.constant(p.grid, 1.0))
        exact = exact_terminal(H2, SX, 1.0, 1.0, np.array([1.0, 0.0]))
        assert np.linalg.norm(traj.final.amplitudes - exact) < 1e-6

    def test_second_order_convergence(self):
        errors = []
        for n in (100, 200, 400, 800):
            p = qubit(T=1.0, n_steps=n)
            traj = propagate_fixed(p, ControlField.constant(p.grid, 1.0))
            exact = exact_terminal(H2, SX, 1.0, 1.0, np.array([1.0, 0.0]))
            errors.append(np.linalg.norm(traj.final.amplitudes - exact))
        ratios = np.array(errors[:-1]) / np.array(errors[1:])
        assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios

    def test_norm_conserved(self):
        p = two_level(T=5.0, n_steps=20000)
        rng = np.random.default_rng(1)
        f = ControlField(p.grid, rng.normal(size=p.grid.n_steps))
        psi = propagate_fixed(p, f)
        assert np.max(np.abs(psi.norms() - 1.0)) < 1e-9
        chi = propagate_fixed(p, f, terminal=p.O @ psi.final)
        assert np.ptp(chi.norms()) < 1e-9

    def test_reversibility(self):
        p = two_level(T=2.0, n_steps=3000)
        rng = np.random.default_rng(2)
        f = ControlField(p.grid, rng.normal(size=p.grid.n_steps))
        psi = propagate_fixed(p, f)
        back = propagate_fixed(p, f, terminal=psi.final)
        np.testing.assert_allclose(back.initial.amplitudes, p.psi0.amplitudes, atol=1e-10)

    def test_grid_mismatch(self):
        p = qubit(n_steps=100)
        with pytest.raises(DimensionError):
            propagate_fixed(p, ControlField.zeros(TimeGrid(1.0, 50)))


class TestSweeps:
    def setup_method(self):
        self.p = two_level(T=2.0, n_steps=800)
        rng = np.random.default_rng(4)
        self.f = ControlField(self.p.grid, 0.3 * rng.normal(size=self.p.grid.n_steps))
        self.psi = propagate_fixed(self.p, self.f)
        self.chi = propagate_fixed(self.p, self.f, terminal=self.p.O @ self.psi.final)

    def test_delta_zero_decouples(self):
        eps, psi = forward_sweep_with_update(self.p, SchemeParams(1.0, 0.0, 1.0), self.f, self.chi)
        np.testing.assert_array_equal(eps.values, self.f.values)
        np.testing.assert_allclose(psi.states, self.psi.states, atol=1e-14)

    def test_zero_adjoint_scales_field(self):
        zero = Trajectory(self.p.grid, np.zeros((self.p.grid.n_steps + 1, 2)))
        eps, _ = forward_sweep_with_update(self.p, SchemeParams(1.0, 0.5, 1.0), self.f, zero)
        np.testing.assert_allclose(eps.values, 0.5 * self.f.values, rtol=1e-15)

    def test_eta_zero_decouples(self):
        eps_t, chi = backward_sweep_with_update(self.p, SchemeParams(1.0, 1.0, 0.0), self.f, self.psi)
        np.testing.assert_array_equal(eps_t.values, self.f.values)
        np.testing.assert_allclose(chi.states, self.chi.states, atol=1e-14)

    def test_zero_observable(self):
        p = qubit(psi0=(0.6, 0.8), T=2.0, n_steps=800, O=np.zeros((2, 2)))
        psi = propagate_fixed(p, self.f)
        eps_t, chi = backward_sweep_with_update(p, SchemeParams(1.0, 1.0, 0.25), self.f, psi)
        assert np.all(chi.states == 0)
        np.testing.assert_allclose(eps_t.values, 0.75 * self.f.values, rtol=1e-15)

    @pytest.mark.parametrize("rule", ["midpoint", "causal"])
    def test_forward_update_relation(self, rule):
        # the produced field satisfies the update rule against the produced states
        params = SchemeParams(0.7, 1.3, 1.0)
        eps, psi = forward_sweep_with_update(self.p, params, self.f, self.chi, rule)
        mu = self.p.mu.entries
        if rule == "midpoint":
            chi_s = self.chi.midpoints()
            psi_s = psi.midpoints()
        else:
            chi_s = self.chi.states[:-1]
            psi_s = psi.states[:-1]
        coupling = np.einsum("ji,ik,jk->j", chi_s.conj(), mu, psi_s).imag
        expected = (1 - params.delta) * self.f.values - params.delta / params.alpha * coupling
        np.testing.assert_allclose(eps.values, expected, atol=1e-12)

    def test_sweeps_preserve_norm(self):
        params = SchemeParams(1.0, 1.0, 1.0)
        eps, psi = forward_sweep_with_update(self.p, params, self.f, self.chi)
        assert np.max(np.abs(psi.norms() - 1)) < 1e-12
        _, chi = backward_sweep_with_update(self.p, params, eps, psi)
        assert np.ptp(chi.norms()) < 1e-12

    def test_unknown_rule(self):
        with pytest.raises(ValueError, match="rule"):
            forward_sweep_with_update(self.p, SchemeParams(1.0), self.f, self.chi, "euler")

    def test_tiny_alpha_reported(self):
        p = two_level(T=5.0, n_steps=50)
        psi = propagate_fixed(p, self.f.__class__.constant(p.grid, 1.0))
        with pytest.raises(SweepError):
            backward_sweep_with_update(p, SchemeParams(1e-6, 1.0, 1.0), ControlField.constant(p.grid, 1.0), psi)


def _dense_cayley(H, mu, e, dt, v):
    A = np.eye(len(v)) + 0.5j * dt * (H - e * mu)
    B = np.eye(len(v)) - 0.5j * dt * (H - e * mu)
    return np.linalg.solve(A, B @ v)


@pytest.mark.parametrize("band", [0, 1, 2, 5])
def test_banded_step_matches_dense_solve(band):
    rng = np.random.default_rng(band)
    n = 6
    mask = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) <= band
    a = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) * mask
    H = a + a.conj().T
    mu = np.diag(rng.normal(size=n))
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    for dt in (0.3, -0.3):
        out = step(StateVector(v), H, mu, 0.7, dt)
        np.testing.assert_allclose(out.amplitudes, _dense_cayley(H, mu, 0.7, dt, v), atol=1e-13)
