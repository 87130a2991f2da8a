"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured
quantities before asserting, so ``pytest -v`` output doubles as a report.
"""

import time

import numpy as np
import pytest

from dgtd.harness.config import build_problem
from dgtd.harness.oracles import central_difference_gradient, exact_tabular_values, monte_carlo_mean
from dgtd.harness.presets import get_preset, random_instance
from dgtd.harness.runner import run_dgtd as run_configured
from dgtd.learn import (
    DgtdState,
    SamplingMode,
    StepSchedule,
    dgtd_step,
    draw_transitions,
    residual_step,
    run_td0,
    sampled_increment,
)
from dgtd.mrp import draw_states
from dgtd.oracle import (
    BoxSet,
    StackedState,
    assemble_saddle_system,
    distance_to_star,
    integrate_ode,
    kkt_residual,
    lyapunov_bilinear,
    lyapunov_quadratic,
    msbe,
    mspbe,
    mspbe_gradient,
    solve_projected_bellman,
    stationary_set,
)
from dgtd.approx import projection_matrix

N_INSTANCES = 20


@pytest.fixture(scope="module")
def instances():
    return [random_instance(seed) for seed in range(N_INSTANCES)]


@pytest.fixture(scope="module")
def systems(instances):
    return [assemble_saddle_system(i.mrp, i.Phi, i.D, i.net) for i in instances]


@pytest.fixture
def report(capsys):
    def _report(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return _report


def _affine_root(grad, q):
    """Root of an affine map from its values at 0 and the unit vectors."""
    g0 = grad(np.zeros(q))
    J = np.column_stack([grad(e) - g0 for e in np.eye(q)])
    return np.linalg.solve(J, -g0)


def test_criterion_01_gradient_root_equals_fixed_point(instances, report):
    start = time.perf_counter()
    worst_rel, worst_res = 0.0, 0.0
    for inst in instances:
        mrp, Phi, D = inst.mrp, inst.Phi, inst.D
        w_fp = solve_projected_bellman(mrp, Phi, D)
        w_root = _affine_root(lambda w: mspbe_gradient(w, mrp, Phi, D), Phi.shape[1])
        worst_rel = max(worst_rel, np.linalg.norm(w_root - w_fp) / np.linalg.norm(w_fp))
        Pi = projection_matrix(Phi, D)
        res = np.abs(Pi @ (mrp.central_reward + mrp.gamma * mrp.P @ Phi @ w_fp) - Phi @ w_fp).max()
        worst_res = max(worst_res, res)
    elapsed = time.perf_counter() - start
    ok = worst_rel < 1e-8 and worst_res < 1e-10 and elapsed < 1.0
    report(1, ok, f"max rel diff {worst_rel:.2e} (<1e-8), max projected Bellman residual {worst_res:.2e} (<1e-10), "
                  f"{elapsed:.2f}s (<1s)")


def test_criterion_02_stationary_set_is_kkt(systems, report):
    worst_kkt, worst_ls, v_zero = 0.0, 0.0, True
    for sys in systems:
        stat = stationary_set(sys)
        worst_kkt = max(worst_kkt, kkt_residual(stat.point(), sys))
        worst_ls = max(worst_ls, float(np.linalg.norm(sys.Lbar @ stat.mu_particular - stat.mu_rhs)))
        v_zero &= bool(np.all(stat.v_star == 0.0))
    ok = worst_kkt < 1e-8 and worst_ls < 1e-8 and v_zero
    report(2, ok, f"max ||Ax*+b|| {worst_kkt:.2e} (<1e-8), v*=0 exactly: {v_zero}, "
                  f"max mu least-squares residual {worst_ls:.2e} (<1e-8)")


def test_criterion_03_ode_converges_with_monotone_lyapunov(systems, report):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_dist, worst_dv = 0.0, -np.inf
    for sys in systems:
        stat = stationary_set(sys)
        x_star = stat.point()
        rho = float(np.abs(np.linalg.eigvals(sys.A)).max())
        step = 0.5 / rho
        for _ in range(5):
            x0 = x_star + rng.normal(size=sys.dim)
            t_end = np.log(1e8 * max(1.0, np.linalg.norm(x0 - x_star))) / sys.decay_rate
            traj = integrate_ode(sys, x0, step, t_end)
            diff = traj.x - x_star
            V = 0.5 * np.einsum("ij,ij->i", diff, diff)
            worst_dv = max(worst_dv, float(np.diff(V).max()))
            worst_dist = max(worst_dist, distance_to_star(traj.x[-1], stat, sys))
    elapsed = time.perf_counter() - start
    ok = worst_dist < 1e-6 and worst_dv <= 1e-10 and elapsed < 30.0
    report(3, ok, f"max final dist {worst_dist:.2e} (<1e-6), max per-step Lyapunov increase {worst_dv:.2e} (<=1e-10), "
                  f"{elapsed:.1f}s (<30s)")


def _euler_step(sys) -> float:
    ev = np.linalg.eigvals(sys.A)
    ev = ev[np.abs(ev) > 1e-8 * np.abs(ev).max()]
    return 0.5 * float(np.min(2 * ev.real / np.abs(ev) ** 2))


def test_criterion_04_projected_ode(systems, report):
    # the three instances with the fewest Euler steps to convergence
    def cost(sys):
        return np.log(1e12) / sys.decay_rate / _euler_step(sys)

    chosen = sorted(systems, key=cost)[:3]
    rng = np.random.default_rng(4)
    steps = violations = 0
    worst_ratio, worst_cone = -np.inf, 0.0
    for sys in chosen:
        stat = stationary_set(sys)
        box = BoxSet.symmetric(1.5 * stat.blocks_radius(), sys.dim)
        h = _euler_step(sys)
        A_norm = np.linalg.norm(sys.A, 2)
        for _ in range(5):
            x0 = 10.0 * stat.blocks_radius() * rng.normal(size=sys.dim)
            # Euler contracts more slowly per unit time than the exact flow
            t_end = 2.0 * np.log(1e12 * max(1.0, np.linalg.norm(x0))) / sys.decay_rate
            traj = integrate_ode(sys, x0, h, t_end, projected=box)
            V = np.array([lyapunov_bilinear(x, sys) for x in traj.x])
            g = traj.x[:-1] @ sys.A.T + sys.b
            # first-order tolerance: the O(h^2) remainder of an Euler step
            allowed = h**2 * A_norm * np.einsum("ij,ij->i", g, g) + 1e-10 * np.maximum(1.0, np.abs(V[:-1]))
            dV = np.diff(V)
            steps += dV.size
            violations += int(np.sum(dV > allowed))
            worst_ratio = max(worst_ratio, float(np.max(dV / allowed)))
            x_end = traj.x[-1]
            worst_cone = max(worst_cone, box.normal_cone_violation(x_end, sys.drift(x_end)))
    monotone, stationary = violations == 0, worst_cone < 1e-6
    ok = monotone and stationary
    report(4, ok, f"[V part {'ok' if monotone else 'violated'}] V(x)=x^T(Ax+b) rose beyond tolerance in {violations}/{steps} steps "
                  f"(worst increase {worst_ratio:.3g}x allowed); [cone part {'ok' if stationary else 'violated'}] "
                  f"terminal normal-cone violation {worst_cone:.2e} (<1e-6)")


def test_criterion_05_zero_mean_noise(instances, report):
    start = time.perf_counter()
    inst = instances[0]
    mrp, Phi, dist, net = inst.mrp, inst.Phi, inst.dist, inst.net
    sys = assemble_saddle_system(mrp, Phi, dist.D, net)
    N, q = mrp.n_agents, Phi.shape[1]
    rng = np.random.default_rng(5)
    inside = total = 0
    for _ in range(10):
        params = StackedState(*(rng.normal(size=(N, q)) for _ in range(4)))
        drift = sys.drift(params)

        def batch(k):
            s, sn, _ = draw_transitions(mrp, dist, N, SamplingMode.SHARED_IID, rng, size=k)
            return sampled_increment(params, mrp, Phi, net.L, s, sn).reshape(k, -1)

        mean, se = monte_carlo_mean(batch, 100_000)
        tol = np.maximum(3 * se, 1e-9 * max(1.0, np.abs(drift).max()))
        inside += int(np.sum(np.abs(mean - drift) <= tol))
        total += drift.size
    elapsed = time.perf_counter() - start
    frac = inside / total
    ok = frac >= 0.95 and elapsed < 60.0
    report(5, ok, f"{inside}/{total} components ({frac:.1%}) within 3 standard errors (>=95%), {elapsed:.1f}s (<60s)")


def _preset_run(name):
    cfg = get_preset(name)
    problem = build_problem(cfg)
    start = time.perf_counter()
    series, _ = run_configured(cfg, problem)
    return series, time.perf_counter() - start


def test_criterion_06_example2(report):
    series, elapsed = _preset_run("example2")
    w_star = series.w_star
    scale = np.linalg.norm(w_star)
    w = series.final.w
    cons = float(np.linalg.norm(w - w.mean(axis=0), axis=1).max())
    dist = float(np.linalg.norm(w.mean(axis=0) - w_star))
    cons_series = series.column("consensus_err")
    ok = cons < 1e-2 * scale and dist < 5e-2 * scale and elapsed < 120.0
    report(6, ok, f"consensus err {cons:.3g} (<{1e-2 * scale:.3g}), ||w_avg-w*|| {dist:.3g} (<{5e-2 * scale:.3g}, "
                  f"relative {dist / scale:.3f}), peak/final consensus {cons_series.max():.3g}/{cons_series[-1]:.3g}, "
                  f"{elapsed:.1f}s (<120s)")


def test_criterion_07_example1_shaped(report):
    series, elapsed = _preset_run("example1")
    w_star = series.w_star
    w = series.final.w
    w_avg = w.mean(axis=0)
    agree = float(np.max(np.linalg.norm(w - w_avg, axis=1)) / np.linalg.norm(w_avg))
    match = float(np.max(np.linalg.norm(w - w_star, axis=1)) / np.linalg.norm(w_star))
    ok = agree < 0.02 and match < 0.05 and elapsed < 300.0
    report(7, ok, f"agent agreement {agree:.2e} (<2%), max ||w_i-w*||/||w*|| {match:.3f} (<5%), {elapsed:.1f}s (<300s)")


def test_criterion_08_single_node_reduction(report):
    inst = random_instance(0, n_states=(6, 6), q=(3, 3), n_agents=(1, 1))
    mrp, Phi, net, dist = inst.mrp, inst.Phi, inst.net, inst.dist
    sys = assemble_saddle_system(mrp, Phi, dist.D, net)
    stat = stationary_set(sys)
    state = DgtdState(StackedState.zeros(1, Phi.shape[1]), rng=np.random.default_rng(8))
    schedule = StepSchedule.harmonic(2.0, 200.0)
    exact_zero = True
    for _ in range(200_000):
        state = dgtd_step(state, mrp, Phi, net, None, schedule, dist=dist)
        exact_zero &= not (state.params.v.any() or state.params.mu.any())
    target = np.concatenate([stat.theta_star, stat.w_star])
    got = np.concatenate([state.params.theta.ravel(), state.params.w.ravel()])
    rel = float(np.linalg.norm(got - target) / np.linalg.norm(target))
    ok = exact_zero and rel < 0.05
    report(8, ok, f"v and mu identically zero for all 200000 rounds: {exact_zero}; "
                  f"(theta, w) relative error vs oracle {rel:.3f} (<5%)")


def test_criterion_09_gradient_check(instances, report):
    rng = np.random.default_rng(9)
    worst = 0.0
    for inst in instances:
        mrp, Phi, D = inst.mrp, inst.Phi, inst.D

        def total(w):
            return sum(mspbe(w, mrp, Phi, D, r) for r in mrp.rewards)

        for _ in range(20):
            w = rng.normal(size=Phi.shape[1])
            fd = central_difference_gradient(total, w, h=1e-4)
            g = mspbe_gradient(w, mrp, Phi, D)
            worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    report(9, worst < 1e-6, f"max relative error vs central differences {worst:.2e} (<1e-6) over "
                             f"{20 * len(instances)} points")


def test_criterion_10_baselines(report):
    inst = random_instance(3, n_states=(8, 8), q=(3, 3), n_agents=(1, 1))
    mrp = inst.mrp
    S = mrp.n_states
    V = exact_tabular_values(mrp.P, mrp.central_reward, mrp.gamma)
    w = run_td0(mrp, np.eye(S), schedule=StepSchedule.harmonic(5.0, 50.0), iterations=200_000,
                rng=np.random.default_rng(10), dist=inst.dist)
    td_rel = float(np.linalg.norm(w - V) / np.linalg.norm(V))

    Phi, r, g = inst.Phi, mrp.central_reward, mrp.gamma
    rng = np.random.default_rng(11)
    w0 = rng.normal(size=Phi.shape[1])

    def batch(k):
        s = draw_states(inst.dist.cdf, rng.random(k))
        s1 = draw_states(mrp.transition_cdf[s], rng.random(k))
        s2 = draw_states(mrp.transition_cdf[s], rng.random(k))
        return np.array([residual_step(w0, Phi[a], Phi[b], Phi[c], r[a], g, 1.0) - w0 for a, b, c in zip(s, s1, s2)])

    mean, se = monte_carlo_mean(batch, 100_000)
    grad = central_difference_gradient(lambda u: msbe(u, mrp, Phi, inst.D), w0)
    z = np.abs(mean + grad) / se
    ok = td_rel < 0.05 and bool(np.all(z <= 3.0))
    report(10, ok, f"tabular TD(0) relative error {td_rel:.3f} (<5%); residual-gradient mean vs -grad MSBE "
                   f"max deviation {z.max():.2f} standard errors (<=3)")
