import math

import numpy as np
import pytest

from conftest import k2_graph, path_graph, random_connected_graph
from loadsync.dynamics import (DynamicsSpec, EpsilonMatrix, NonSmoothDynamicsError,
                               Trajectory, diffusive_coupling, effective_laplacian,
                               error_state, integrate_continuous, linearize,
                               mean_drift, proportional_self, sine_coupling,
                               step_conservative, step_nonconservative)
from loadsync.topology import laplacian

RHO_BAR = 0.5


def linear_spec(n, a, c, rho_bar=RHO_BAR):
    return DynamicsSpec.homogeneous(n, proportional_self(a, rho_bar),
                                    diffusive_coupling(c), rho_bar)


class TestSpecValidation:
    def test_equilibrium_condition_enforced(self):
        with pytest.raises(ValueError):
            DynamicsSpec.homogeneous(2, lambda rho: rho, diffusive_coupling(1.0), RHO_BAR)
        with pytest.raises(ValueError):
            DynamicsSpec.homogeneous(2, proportional_self(1.0, RHO_BAR),
                                     lambda ri, rj: ri + rj, RHO_BAR)

    def test_pairwise_couplings_accepted(self):
        spec = DynamicsSpec(n=2, self_fns=(proportional_self(1.0, RHO_BAR),) * 2,
                            coupling_fns={(0, 1): diffusive_coupling(1.0),
                                          (1, 0): diffusive_coupling(2.0)},
                            equilibrium=RHO_BAR)
        assert spec.coupling(1, 0)(0.6, 0.4) == pytest.approx(-0.4)


class TestLinearize:
    def test_linear_case_is_its_own_linearization(self):
        a, c = 0.7, 0.3
        graph = path_graph(3)
        model = linearize(linear_spec(3, a, c), graph)
        assert model.d_f == pytest.approx([-a] * 3, abs=1e-8)
        lap = laplacian(graph)
        assert model.m == pytest.approx(-a * np.eye(3) - c * lap, abs=1e-7)

    def test_sine_coupling_slope_is_minus_one(self):
        spec = DynamicsSpec.homogeneous(2, proportional_self(0.5, RHO_BAR),
                                        sine_coupling(), RHO_BAR)
        model = linearize(spec, k2_graph())
        assert model.h[0, 1] == pytest.approx(-1.0, abs=1e-9)
        assert model.h[1, 0] == pytest.approx(-1.0, abs=1e-9)

    def test_cubic_matches_analytic_derivative(self):
        # f(rho) = -a d - b d^3 with d = rho - rho_bar  =>  f'(rho_bar) = -a
        # g = (ri - rj) * (-(c + e (ri - rho_bar)^2))  =>  h(rho_bar, rho_bar) = -c
        a, b, c, e = 0.8, 2.5, 0.6, 1.7
        spec = DynamicsSpec.homogeneous(
            2,
            lambda rho: -a * (rho - RHO_BAR) - b * (rho - RHO_BAR) ** 3,
            lambda ri, rj: (ri - rj) * (-(c + e * (ri - RHO_BAR) ** 2)),
            RHO_BAR)
        model = linearize(spec, k2_graph())
        assert model.d_f[0] == pytest.approx(-a, abs=1e-6)
        assert model.h[0, 1] == pytest.approx(-c, abs=1e-6)

    def test_model_assembly(self):
        graph = path_graph(3)
        model = linearize(linear_spec(3, 0.5, 0.25), graph)
        assert model.k == pytest.approx(model.q.sum(axis=1))
        assert np.array_equal(model.s, model.s.T)
        assert model.m == pytest.approx(np.diag(model.d_f) + np.diag(model.k) - model.q)

    def test_non_smooth_dynamics_detected(self):
        spec = DynamicsSpec.homogeneous(
            2, lambda rho: 0.0 if rho == RHO_BAR else float("nan"),
            diffusive_coupling(1.0), RHO_BAR)
        with pytest.raises(NonSmoothDynamicsError):
            linearize(spec, k2_graph())

    def test_paper_standard_families_have_negative_slopes(self):
        for coupling in (diffusive_coupling(0.4), sine_coupling()):
            spec = DynamicsSpec.homogeneous(2, proportional_self(0.5, RHO_BAR),
                                            coupling, RHO_BAR)
            model = linearize(spec, k2_graph())
            assert model.h[0, 1] < 0


class TestIntegrateContinuous:
    def test_equilibrium_stays_put(self):
        spec = linear_spec(3, 0.5, 0.5)
        traj = integrate_continuous(spec, path_graph(3), np.full(3, RHO_BAR),
                                    dt=0.01, steps=100)
        assert np.allclose(traj.states, RHO_BAR, atol=1e-12)
        assert not traj.blown_up

    def test_k2_closed_form(self):
        # pure diffusion at rate 0.5: the gap contracts by (1 - dt) per Euler step
        spec = linear_spec(2, 0.0, 0.5)

        def zero_self(rho):
            return 0.0

        spec = DynamicsSpec.homogeneous(2, zero_self, diffusive_coupling(0.5), RHO_BAR)
        dt, steps = 0.01, 400
        traj = integrate_continuous(spec, k2_graph(), np.array([0.8, 0.2]), dt, steps)
        ks = np.arange(steps + 1)
        expected_gap = 0.6 * (1.0 - dt) ** ks
        gaps = traj.states[:, 0] - traj.states[:, 1]
        assert gaps == pytest.approx(expected_gap, abs=1e-12)
        assert np.allclose(traj.states.mean(axis=1), 0.5, atol=1e-12)
        # continuous-limit agreement at the endpoint
        assert gaps[-1] == pytest.approx(0.6 * math.exp(-dt * steps), rel=0.05)

    def test_matches_matrix_exponential_oracle(self):
        a, c = 0.6, 0.4
        graph = path_graph(3)
        lap = laplacian(graph)
        m = -a * np.eye(3) - c * lap
        rho0 = np.array([0.9, 0.4, 0.2])
        spec = linear_spec(3, a, c)
        errors = []
        for dt in (0.02, 0.01, 0.005):
            steps = int(round(1.0 / dt))
            traj = integrate_continuous(spec, graph, rho0, dt, steps)
            w, v = np.linalg.eigh(m)
            expm = v @ np.diag(np.exp(w * 1.0)) @ v.T
            exact = RHO_BAR + expm @ (rho0 - RHO_BAR)
            errors.append(np.max(np.abs(traj.states[-1] - exact)))
        # first-order integrator: halving dt roughly halves the error
        assert errors[2] < errors[0] / 2.5
        assert errors[0] < 0.01

    def test_stable_model_contracts_monotonically(self):
        spec = linear_spec(3, 0.6, 0.4)
        traj = integrate_continuous(spec, path_graph(3), np.array([0.9, 0.4, 0.2]),
                                    dt=0.005, steps=500)
        norms = np.linalg.norm(traj.states - RHO_BAR, axis=1)
        assert np.all(np.diff(norms) <= 1e-12)

    def test_blow_up_flag(self):
        spec = DynamicsSpec.homogeneous(2, lambda rho: 5.0 * (rho - RHO_BAR),
                                        diffusive_coupling(0.1), RHO_BAR)
        traj = integrate_continuous(spec, k2_graph(), np.array([2.0, -1.0]),
                                    dt=0.5, steps=200)
        assert traj.blown_up
        assert traj.states.shape[0] < 201


class TestStepConservative:
    def test_k2_quarter_step(self):
        new = step_conservative(np.array([0.8, 0.2]), 0.25, k2_graph())
        assert new == pytest.approx([0.65, 0.35])

    def test_empty_graph_is_identity(self):
        from loadsync.topology import CoverageGraph
        g = CoverageGraph(np.zeros((3, 3)))
        rho = np.array([0.1, 0.5, 0.9])
        assert step_conservative(rho, 0.7, g) == pytest.approx(rho)

    def test_boundary_step_oscillates_period_two(self):
        rho = np.array([0.8, 0.2])
        once = step_conservative(rho, 1.0, k2_graph())
        twice = step_conservative(once, 1.0, k2_graph())
        assert once == pytest.approx([0.2, 0.8])
        assert twice == pytest.approx([0.8, 0.2])

    def test_mean_preserved(self, rng):
        for _ in range(20):
            g = random_connected_graph(rng, max_n=12)
            rho = rng.random(g.n)
            eps = float(rng.uniform(0.01, 0.9))
            new = step_conservative(rho, eps, g)
            assert abs(new.mean() - rho.mean()) <= 1e-12

    def test_optional_self_term(self):
        fns = [proportional_self(0.5, RHO_BAR)] * 2
        rho = np.array([0.8, 0.2])
        new = step_conservative(rho, 0.25, k2_graph(), self_fns=fns)
        base = step_conservative(rho, 0.25, k2_graph())
        assert new == pytest.approx(base + np.array([-0.15, 0.15]))


class TestStepNonconservative:
    def test_two_node_worked_example(self):
        eps = EpsilonMatrix(np.array([[0.0, 0.3], [0.1, 0.0]]))
        rho = np.array([0.2, 0.8])
        new, omega = step_nonconservative(rho, eps, k2_graph())
        assert new == pytest.approx([0.38, 0.74])
        assert omega == pytest.approx([0.06, 0.06])
        assert mean_drift(omega) == pytest.approx(0.06)

    def test_symmetric_fractions_reduce_to_conservative(self, rng):
        g = random_connected_graph(rng, max_n=8)
        sym = rng.uniform(0.05, 0.4, size=(g.n, g.n))
        sym = (sym + sym.T) / 2.0
        np.fill_diagonal(sym, 0.0)
        eps = EpsilonMatrix(sym)
        rho = rng.random(g.n)
        new, omega = step_nonconservative(rho, eps, g)
        assert omega == pytest.approx(np.zeros(g.n), abs=1e-15)
        # same update as running a conservative step edge by edge
        e_masked = sym * g.adjacency
        expected = rho + e_masked @ rho - e_masked.sum(axis=1) * rho
        assert new == pytest.approx(expected)

    def test_decomposition_identity(self, rng):
        for _ in range(25):
            g = random_connected_graph(rng, max_n=6)
            values = rng.uniform(0.0, 0.8, size=(g.n, g.n))
            np.fill_diagonal(values, 0.0)
            eps = EpsilonMatrix(values)
            rho = rng.random(g.n)
            new, omega = step_nonconservative(rho, eps, g)
            l_hat = effective_laplacian(eps, g)
            reconstructed = (np.eye(g.n) - l_hat) @ rho + omega
            assert np.max(np.abs(new - reconstructed)) <= 1e-12

    def test_error_evolution_identity(self, rng):
        for _ in range(25):
            g = random_connected_graph(rng, max_n=6)
            values = rng.uniform(0.0, 0.8, size=(g.n, g.n))
            np.fill_diagonal(values, 0.0)
            eps = EpsilonMatrix(values)
            rho = rng.random(g.n)
            new, omega = step_nonconservative(rho, eps, g)
            l_hat = effective_laplacian(eps, g)
            lhs = error_state(new)
            rhs = (np.eye(g.n) - l_hat) @ error_state(rho) + omega - omega.mean()
            assert np.max(np.abs(lhs - rhs)) <= 1e-12

    def test_mean_drift_matches_realized_means(self, rng):
        for _ in range(25):
            g = random_connected_graph(rng, max_n=6)
            values = rng.uniform(0.0, 0.9, size=(g.n, g.n))
            np.fill_diagonal(values, 0.0)
            eps = EpsilonMatrix(values)
            rho = rng.random(g.n)
            new, omega = step_nonconservative(rho, eps, g)
            assert new.mean() - rho.mean() == pytest.approx(mean_drift(omega), abs=1e-12)


class TestEpsilonMatrix:
    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            EpsilonMatrix(np.array([[0.0, 1.0], [0.2, 0.0]]))
        with pytest.raises(ValueError):
            EpsilonMatrix(np.array([[0.0, -0.1], [0.2, 0.0]]))
        with pytest.raises(ValueError):
            EpsilonMatrix(np.array([[0.1, 0.2], [0.2, 0.0]]))


class TestErrorState:
    def test_balanced_is_zero(self):
        assert error_state(np.array([0.5, 0.5])) == pytest.approx([0.0, 0.0])

    def test_spread(self):
        assert error_state(np.array([0.8, 0.2])) == pytest.approx([0.3, -0.3])

    def test_always_sums_to_zero(self, rng):
        for _ in range(20):
            rho = rng.random(int(rng.integers(1, 20)))
            assert error_state(rho).sum() == pytest.approx(0.0, abs=1e-12)


def test_trajectory_shapes():
    t = Trajectory(states=np.zeros((5, 3)), omegas=np.zeros((4, 3)),
                   step_kind="discrete-nonconservative")
    assert t.states.shape == (5, 3)
    assert t.omegas.shape == (4, 3)
