import numpy as np
import pytest
from scipy.linalg import block_diag

from dgtd.approx import FeatureMap
from dgtd.errors import DivergenceError
from dgtd.harness.config import build_problem
from dgtd.harness.oracles import central_difference_gradient, equality_qp
from dgtd.harness.presets import preset_example2
from dgtd.mrp import MarkovRewardProcess, stationary_distribution
from dgtd.network import path
from dgtd.oracle import (
    BoxSet,
    StackedState,
    assemble_saddle_system,
    distance_to_star,
    dual_constraint,
    dual_objective,
    integrate_ode,
    kkt_residual,
    lyapunov_bilinear,
    lyapunov_quadratic,
    msbe,
    mspbe,
    mspbe_gradient,
    mu_distance_to_set,
    primal_objective,
    reparameterized_constraints,
    reparameterized_objective,
    solve_projected_bellman,
    stationary_set,
)

# Minimizer of the summed MSPBE for the 20-agent example, found with BFGS on a
# from-scratch implementation of the loss (gtol 1e-10); agrees to ~1e-7.
EXAMPLE2_W_STAR = np.array([20.835613551653644, -4.480511868954207, 20.85075910265285])


@pytest.fixture
def system(small):
    return assemble_saddle_system(small.mrp, small.Phi, small.D, small.net)


@pytest.fixture(scope="module")
def example2():
    return build_problem(preset_example2())


class TestLosses:
    def test_mspbe_vanishes_at_fixed_point(self, small):
        w = solve_projected_bellman(small.mrp, small.Phi, small.D)
        assert mspbe(w, small.mrp, small.Phi, small.D) < 1e-20

    def test_mspbe_below_msbe(self, small, rng):
        for _ in range(10):
            w = rng.normal(size=small.Phi.shape[1])
            assert mspbe(w, small.mrp, small.Phi, small.D) <= msbe(w, small.mrp, small.Phi, small.D) + 1e-12

    def test_gradient_matches_finite_differences(self, small, rng):
        mrp, Phi, D = small.mrp, small.Phi, small.D

        def total(w):
            return sum(mspbe(w, mrp, Phi, D, r) for r in mrp.rewards)

        for _ in range(5):
            w = rng.normal(size=Phi.shape[1])
            g = mspbe_gradient(w, mrp, Phi, D)
            np.testing.assert_allclose(g, central_difference_gradient(total, w), rtol=1e-6, atol=1e-8)

    def test_summed_gradient_root_is_central_solution(self, small):
        w = solve_projected_bellman(small.mrp, small.Phi, small.D)
        g = mspbe_gradient(w, small.mrp, small.Phi, small.D)
        assert np.linalg.norm(g) < 1e-10

    def test_example2_fixed_point_matches_bfgs(self, example2):
        w = solve_projected_bellman(example2.mrp, example2.Phi, example2.dist.D)
        np.testing.assert_allclose(w, EXAMPLE2_W_STAR, rtol=1e-6)

    def test_features_spanning_ones_recover_constant_values(self, example2):
        # central reward is 10.5 everywhere, so the value is 10.5 / (1 - 0.5)
        Phi = np.column_stack([np.ones(5), np.arange(5.0)])
        w = solve_projected_bellman(example2.mrp, FeatureMap(Phi).Phi, example2.dist.D)
        np.testing.assert_allclose(Phi @ w, 21.0, rtol=1e-12)


class TestSaddleSystem:
    def test_block_layout(self, system):
        n = system.n_agents * system.q
        A = system.A
        np.testing.assert_array_equal(A[:n, :n], system.Mbar)
        np.testing.assert_array_equal(A[:n, 3 * n:], system.Bbar)
        np.testing.assert_array_equal(A[n:2 * n, n:2 * n], np.eye(n))
        np.testing.assert_array_equal(A[3 * n:, :n], -system.Bbar.T)
        np.testing.assert_array_equal(A[2 * n:3 * n, :3 * n], 0)
        np.testing.assert_array_equal(system.b[n:], 0)

    def test_stacked_state_round_trip(self, system, rng):
        x = rng.normal(size=system.dim)
        s = StackedState.from_vector(x, system.n_agents, system.q)
        np.testing.assert_array_equal(s.to_vector(), x)
        np.testing.assert_array_equal(s.mu.ravel(), x[system.block("mu")])

    def test_stationary_point_is_kkt(self, system, rng):
        stat = stationary_set(system)
        assert np.all(stat.v_star == 0)
        for _ in range(3):
            mu = stat.mu_particular + stat.mu_nullbasis @ rng.normal(size=system.q)
            x = stat.point(mu)
            assert kkt_residual(x, system) < 1e-8
            assert mu_distance_to_set(mu, stat, system) < 1e-10
        np.testing.assert_allclose(
            stat.w_consensus, solve_projected_bellman(system.mrp, system.Phi, system.D), rtol=1e-12
        )

    def test_mu_distance_positive_off_set(self, system):
        stat = stationary_set(system)
        mu = stat.mu_particular + 1e-3 * np.arange(system.n_agents * system.q)
        # components along the consensus null space do not count
        expected = np.linalg.norm((np.eye(len(mu)) - stat.mu_nullbasis @ stat.mu_nullbasis.T) @ (mu - stat.mu_particular))
        assert mu_distance_to_set(mu, stat, system) == pytest.approx(expected, rel=1e-8)

    def test_symmetric_part_is_psd(self, system):
        eig = np.linalg.eigvalsh(system.A + system.A.T)
        assert eig.min() > -1e-10

    def test_network_size_mismatch(self, small):
        with pytest.raises(ValueError):
            assemble_saddle_system(small.mrp, small.Phi, small.D, path(small.mrp.n_agents + 1))


class TestDuality:
    def test_strong_duality_has_no_offset(self, system):
        N, q = system.n_agents, system.q
        n = N * q
        # primal in (w, eps, h) via a dense KKT solve
        Minv = np.linalg.inv(system.Mbar)
        H = block_diag(np.zeros((n, n)), Minv, np.eye(n))
        C = np.block(
            [
                [system.Bbar, np.eye(n), np.zeros((n, n))],
                [system.Lbar, np.zeros((n, n)), -np.eye(n)],
                [system.Lbar, np.zeros((n, n)), np.zeros((n, n))],
            ]
        )
        d = np.concatenate([system.c, np.zeros(2 * n)])
        z = equality_qp(H, np.zeros(3 * n), C, d)
        w, eps, h = z[:n], z[n:2 * n], z[2 * n:]
        np.testing.assert_allclose(reparameterized_constraints(w, eps, h, system), 0, atol=1e-8)
        p_star = reparameterized_objective(w, eps, h, system)

        # dual in (theta, v, mu)
        Hd = block_diag(system.Mbar, np.eye(n), np.zeros((n, n)))
        f = np.concatenate([-system.c, np.zeros(2 * n)])
        Cd = np.hstack([system.Bbar.T, -system.Lbar.T, -system.Lbar.T])
        y = equality_qp(Hd, f, Cd, np.zeros(n))
        th, v, mu = y[:n], y[n:2 * n], y[2 * n:]
        np.testing.assert_allclose(dual_constraint(th, v, mu, system), 0, atol=1e-8)
        psi_star = dual_objective(th, v, system)

        assert p_star == pytest.approx(-psi_star, rel=1e-8, abs=1e-10)
        w_star = stationary_set(system).w_consensus
        total = sum(mspbe(w_star, system.mrp, system.Phi, system.D, r) for r in system.mrp.rewards)
        assert p_star == pytest.approx(total, rel=1e-8)

    def test_objective_forms_agree_on_consensus(self, system, rng):
        for _ in range(5):
            w = np.tile(rng.normal(size=system.q), system.n_agents)
            eps = system.c - system.Bbar @ w
            h = system.Lbar @ w
            a = primal_objective(w, system)
            b = reparameterized_objective(w, eps, h, system)
            per_agent = sum(mspbe(w[: system.q], system.mrp, system.Phi, system.D, r) for r in system.mrp.rewards)
            assert a == pytest.approx(b, rel=1e-10)
            assert a == pytest.approx(per_agent, rel=1e-10)


class TestFlow:
    def test_quadratic_lyapunov_monotone_under_rk4(self, system, rng):
        stat = stationary_set(system)
        rho = np.abs(np.linalg.eigvals(system.A)).max()
        traj = integrate_ode(system, rng.normal(size=system.dim), 0.5 / rho, 20.0)
        V = np.array([lyapunov_quadratic(x, stat.point()) for x in traj.x])
        assert np.diff(V).max() <= 1e-10
        kkt = np.array([kkt_residual(x, system) for x in traj.x])
        assert np.diff(kkt).max() <= 1e-10

    def test_bilinear_gradient_is_symmetrized(self, system, rng):
        # the first-order change of x^T(Ax+b) is ((A + A^T) x + b) . dx, not (Ax + b) . dx
        x = rng.normal(size=system.dim)
        g = central_difference_gradient(lambda y: lyapunov_bilinear(y, system), x, h=1e-6)
        np.testing.assert_allclose(g, (system.A + system.A.T) @ x + system.b, rtol=1e-6, atol=1e-6)

    def test_unstable_step_raises(self, system):
        rho = np.abs(np.linalg.eigvals(system.A)).max()
        with pytest.raises(DivergenceError, match="unstable"):
            integrate_ode(system, np.zeros(system.dim), 10.0 / rho, 1.0)

    def test_projected_euler_stays_in_box(self, system, rng):
        stat = stationary_set(system)
        box = BoxSet.symmetric(1.5 * stat.blocks_radius(), system.dim)
        ev = np.linalg.eigvals(system.A)
        ev = ev[np.abs(ev) > 1e-8]
        h = 0.5 * np.min(2 * ev.real / np.abs(ev) ** 2)
        traj = integrate_ode(system, 10 * rng.normal(size=system.dim), h, 5.0, projected=box)
        assert all(box.contains(x) for x in traj.x)

    def test_distance_ignores_mu(self, system):
        stat = stationary_set(system)
        x = stat.point(stat.mu_particular + 5.0)
        assert distance_to_star(x, stat, system) == 0.0


class TestBox:
    def test_clamp(self):
        box = BoxSet.symmetric(1.0, 3)
        np.testing.assert_array_equal(box.clamp([2.0, -3.0, 0.5]), [1.0, -1.0, 0.5])

    def test_normal_cone(self):
        box = BoxSet(np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]))
        x = np.array([1.0, -1.0, 0.0])
        assert box.normal_cone_violation(x, [2.0, -3.0, 0.0]) == 0.0
        assert box.normal_cone_violation(x, [-2.0, 0.0, 0.0]) == 2.0
        assert box.normal_cone_violation(x, [0.0, 0.0, 0.25]) == 0.25

    def test_tangent_projection(self):
        box = BoxSet.symmetric(1.0, 2)
        np.testing.assert_array_equal(box.tangent_projection([1.0, 0.0], [3.0, -2.0]), [0.0, -2.0])

    def test_from_blocks(self, system):
        box = BoxSet.from_blocks(system, theta=2.0)
        assert np.all(box.upper[system.block("theta")] == 2.0)
        assert np.all(np.isinf(box.upper[system.block("mu")]))

    def test_inverted_bounds(self):
        with pytest.raises(ValueError):
            BoxSet(np.ones(2), np.zeros(2))


def test_example2_tabular_exact_values(example2):
    mrp = MarkovRewardProcess(example2.mrp.P, example2.mrp.rewards, 0.5)
    dist = stationary_distribution(mrp.P)
    w = solve_projected_bellman(mrp, np.eye(5), dist.D)
    np.testing.assert_allclose(w, 21.0, rtol=1e-12)
