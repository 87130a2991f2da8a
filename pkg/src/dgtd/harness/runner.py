"""Turn a ``RunConfig`` into runs, oracle reports and ODE traces."""

from __future__ import annotations

import numpy as np

from ..learn import MetricsSeries, SamplingMode, gtd_single, run_dgtd as _run_dgtd, run_td0
from ..oracle import (
    BoxSet,
    StackedState,
    assemble_saddle_system,
    integrate_ode,
    kkt_residual,
    mspbe,
    ode_diagnostics,
    solve_projected_bellman,
    stationary_set,
)
from ..approx import projection_matrix
from .config import Problem, RunConfig, build_problem


def _init(cfg: RunConfig, n_agents: int, q: int) -> StackedState | None:
    if cfg.init == "zero":
        return None
    rng = np.random.default_rng([cfg.seed, 1])
    return StackedState(*(cfg.init_scale * rng.normal(size=(n_agents, q)) for _ in range(4)))


def resolve_boxes(cfg: RunConfig, problem: Problem) -> tuple[BoxSet | None, float | None]:
    """Symmetric box of radius ``box_radius`` or ten times the largest stationary coordinate."""
    if not cfg.projection:
        return None, None
    sys = assemble_saddle_system(problem.mrp, problem.Phi, problem.dist.D, problem.net)
    radius = cfg.box_radius
    if radius is None:
        radius = 10.0 * max(stationary_set(sys).blocks_radius(), 1e-12)
    return BoxSet.symmetric(radius, sys.dim), float(radius)


def run_dgtd(cfg: RunConfig, problem: Problem | None = None) -> tuple[MetricsSeries, dict]:
    """Run DGTD as configured; returns the series and run notes for the summary."""
    problem = build_problem(cfg) if problem is None else problem
    boxes, radius = resolve_boxes(cfg, problem)
    series = _run_dgtd(
        problem.mrp,
        problem.Phi,
        problem.net,
        schedule=cfg.step_schedule(),
        iterations=cfg.iterations,
        rng=np.random.default_rng(cfg.seed),
        mode=SamplingMode(cfg.mode),
        boxes=boxes,
        cadence=cfg.cadence,
        init=_init(cfg, problem.mrp.n_agents, problem.Phi.shape[1]),
        early_stop=cfg.early_stop_rule(),
        dist=problem.dist,
        chunk=cfg.chunk,
    )
    notes = dict(problem.notes)
    notes["box_radius"] = radius
    notes["schedule_within_theory"] = cfg.step_schedule().within_theory
    return series, notes


def run_gtd(cfg: RunConfig, agent: int | None = None, problem: Problem | None = None) -> MetricsSeries:
    """Single-agent GTD on one agent's reward (or the central reward)."""
    problem = build_problem(cfg) if problem is None else problem
    return gtd_single(
        problem.mrp,
        problem.Phi,
        agent=agent,
        schedule=cfg.step_schedule(),
        iterations=cfg.iterations,
        rng=np.random.default_rng(cfg.seed),
        mode=SamplingMode(cfg.mode),
        cadence=cfg.cadence,
        dist=problem.dist,
        chunk=cfg.chunk,
    )


def run_td(cfg: RunConfig, agent: int | None = None, problem: Problem | None = None) -> np.ndarray:
    problem = build_problem(cfg) if problem is None else problem
    reward = None if agent is None else problem.mrp.rewards[agent]
    return run_td0(
        problem.mrp,
        problem.Phi,
        schedule=cfg.step_schedule(),
        iterations=cfg.iterations,
        rng=np.random.default_rng(cfg.seed),
        reward=reward,
        trajectory=SamplingMode(cfg.mode) is SamplingMode.SHARED_TRAJECTORY,
        dist=problem.dist,
    )


def solve_report(cfg: RunConfig, problem: Problem | None = None) -> dict:
    """Oracle quantities for a configured instance."""
    problem = build_problem(cfg) if problem is None else problem
    mrp, Phi, D = problem.mrp, problem.Phi, problem.dist.D
    sys = assemble_saddle_system(mrp, Phi, D, problem.net)
    stat = stationary_set(sys)
    w_star = stat.w_consensus
    Pi = projection_matrix(Phi, D)
    bellman_res = np.abs(Pi @ (mrp.central_reward + mrp.gamma * mrp.P @ Phi @ w_star) - Phi @ w_star).max()
    per_agent = [mspbe(w_star, mrp, Phi, D, mrp.rewards[i]) for i in range(mrp.n_agents)]
    return {
        "w_star": w_star,
        "values_at_w_star": Phi @ w_star,
        "theta_star": stat.theta_star.reshape(mrp.n_agents, -1),
        "v_star": stat.v_star.reshape(mrp.n_agents, -1),
        "mu_particular": stat.mu_particular.reshape(mrp.n_agents, -1),
        "kkt_residual": kkt_residual(stat.point(), sys),
        "projected_bellman_residual": float(bellman_res),
        "mspbe_central_at_w_star": mspbe(w_star, mrp, Phi, D),
        "mspbe_per_agent_at_w_star": per_agent,
        "sum_mspbe_at_w_star": float(sum(per_agent)),
        "stationary_distribution": problem.dist.d,
        "decay_rate": sys.decay_rate,
        "per_agent_w_star": [solve_projected_bellman(mrp, Phi, D, mrp.rewards[i]) for i in range(mrp.n_agents)],
        "notes": problem.notes,
        "config": cfg.to_dict(),
    }


def ode_trace(cfg: RunConfig, t_end: float, step: float | None = None, projected: bool = False,
              record_every: int = 1, problem: Problem | None = None) -> dict:
    """Integrate the mean dynamics from the configured initialization."""
    problem = build_problem(cfg) if problem is None else problem
    sys = assemble_saddle_system(problem.mrp, problem.Phi, problem.dist.D, problem.net)
    stat = stationary_set(sys)
    rho = float(np.abs(np.linalg.eigvals(sys.A)).max())
    boxes = None
    if projected:
        radius = cfg.box_radius or 10.0 * max(stat.blocks_radius(), 1e-12)
        boxes = BoxSet.symmetric(radius, sys.dim)
        if step is None:
            ev = np.linalg.eigvals(sys.A)
            ev = ev[np.abs(ev) > 1e-8 * rho]
            step = 0.5 * float(np.min(2 * ev.real / np.abs(ev) ** 2))
    elif step is None:
        step = 0.5 / rho
    x0 = _init(cfg, problem.mrp.n_agents, problem.Phi.shape[1])
    x0 = np.zeros(sys.dim) if x0 is None else x0.to_vector()
    traj = integrate_ode(sys, x0, step, t_end, projected=boxes, record_every=record_every)
    return ode_diagnostics(traj, sys, stat)
