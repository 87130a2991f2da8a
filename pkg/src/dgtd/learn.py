"""Stochastic learners: distributed primal-dual GTD and single-agent baselines.

Each DGTD round every agent draws a transition, takes one stochastic
primal-dual step on (theta, v, mu, w) using its neighbours' values from the
previous round, and clamps the result onto the box constraints.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .errors import DivergenceError
from .mrp import MarkovRewardProcess, StationaryDist, draw_states, stationary_distribution
from .network import CommNetwork, build_network
from .oracle import (
    BLOCKS,
    BoxSet,
    SaddleSystem,
    StackedState,
    _mspbe_normal,
    assemble_saddle_system,
    kkt_residual,
    solve_projected_bellman,
)


class SamplingMode(str, enum.Enum):
    SHARED_IID = "shared_iid"  # all agents see one (s, s') drawn from d and P
    INDEPENDENT_IID = "independent_iid"  # each agent draws its own (s, s')
    SHARED_TRAJECTORY = "shared_trajectory"  # one simulated chain shared by all agents


@dataclass(frozen=True)
class StepSchedule:
    """``a / (k + b)`` (harmonic) or a constant ``c``."""

    kind: str = "harmonic"
    a: float = 1.0
    b: float = 1.0
    c: float = 0.0

    def __post_init__(self):
        if self.kind == "harmonic":
            if not (self.a > 0 and self.b > 0):
                raise ValueError("harmonic schedule needs a > 0 and b > 0")
        elif self.kind == "constant":
            if self.c < 0:
                raise ValueError("constant step must be non-negative")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def harmonic(cls, a: float, b: float) -> "StepSchedule":
        return cls("harmonic", a=a, b=b)

    @classmethod
    def constant(cls, c: float) -> "StepSchedule":
        return cls("constant", c=c)

    @property
    def within_theory(self) -> bool:
        """Whether the steps sum to infinity with square-summable terms."""
        return self.kind == "harmonic"

    def __call__(self, k: int) -> float:
        if self.kind == "harmonic":
            return self.a / (k + self.b)
        return self.c

    def describe(self) -> str:
        return f"{self.a:g}/(k+{self.b:g})" if self.kind == "harmonic" else f"{self.c:g}"


@dataclass
class DgtdState:
    params: StackedState
    k: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)
    chain_state: int | None = None


def clamp_box(x, boxes: BoxSet | None):
    """Componentwise projection onto the box; identity when ``boxes`` is None."""
    if boxes is None:
        return x
    if isinstance(x, StackedState):
        return StackedState.from_vector(boxes.clamp(x.to_vector()), *x.theta.shape)
    return boxes.clamp(x)


def sampled_increment(params: StackedState, mrp: MarkovRewardProcess, Phi, L, s, s_next) -> np.ndarray:
    """Unscaled DGTD directions for a batch of sampled transitions.

    ``s`` and ``s_next`` have shape ``(K, N)``: transition of agent ``i`` in
    draw ``k``.  Returns ``(K, 4, N, q)``; multiplying by the step size and
    adding to ``params`` gives the pre-projection half-step.  In expectation
    over ``s ~ d, s' ~ P[s]`` this equals ``-A x - b``.
    """
    Phi = np.asarray(Phi)
    theta, v, mu, w = params.theta, params.v, params.mu, params.w
    s, s_next = np.atleast_2d(s), np.atleast_2d(s_next)
    K, N = s.shape
    phi = Phi[s]  # (K, N, q)
    phin = Phi[s_next]
    r = mrp.rewards[np.arange(N)[None, :], s]  # (K, N)
    g = mrp.gamma
    p_theta = np.einsum("knq,nq->kn", phi, theta)
    p_w = np.einsum("knq,nq->kn", phi, w)
    pn_w = np.einsum("knq,nq->kn", phin, w)
    Lv, Lmu, Lw = L @ v, L @ mu, L @ w
    out = np.empty((K, 4, N, phi.shape[2]))
    out[:, 0] = -phi * (p_theta + p_w - g * pn_w - r)[..., None]
    out[:, 1] = -(v - Lw)[None]
    out[:, 2] = Lw[None]
    out[:, 3] = -(Lv + Lmu)[None] + (phi - g * phin) * p_theta[..., None]
    return out


def draw_transitions(mrp: MarkovRewardProcess, dist: StationaryDist, n_agents: int, mode, rng, chain_state=None, size: int = 1):
    """Sample ``size`` rounds of per-agent transitions; returns ``(s, s_next, chain_state)``."""
    mode = SamplingMode(mode)
    if mode is SamplingMode.SHARED_IID:
        s = draw_states(dist.cdf, rng.random(size))
        s_next = draw_states(mrp.transition_cdf[s], rng.random(size))
        return np.repeat(s[:, None], n_agents, 1), np.repeat(s_next[:, None], n_agents, 1), chain_state
    if mode is SamplingMode.INDEPENDENT_IID:
        s = draw_states(dist.cdf, rng.random((size, n_agents)))
        s_next = draw_states(mrp.transition_cdf[s], rng.random((size, n_agents)))
        return s, s_next, chain_state
    if chain_state is None:
        chain_state = int(draw_states(dist.cdf, rng.random()))
    s = np.empty(size, dtype=int)
    s_next = np.empty(size, dtype=int)
    u = rng.random(size)
    cdf = mrp.transition_cdf
    for j in range(size):
        s[j] = chain_state
        chain_state = int(draw_states(cdf[chain_state], u[j]))
        s_next[j] = chain_state
    return np.repeat(s[:, None], n_agents, 1), np.repeat(s_next[:, None], n_agents, 1), chain_state


def dgtd_step(
    state: DgtdState,
    mrp: MarkovRewardProcess,
    Phi,
    net: CommNetwork,
    boxes: BoxSet | None,
    schedule: StepSchedule,
    mode=SamplingMode.SHARED_IID,
    dist: StationaryDist | None = None,
) -> DgtdState:
    """One synchronous DGTD round.

    All agents read iteration-``k`` values of their neighbours, so the
    result does not depend on the order in which agents are visited.
    """
    dist = stationary_distribution(mrp.P) if dist is None else dist
    s, s_next, chain = draw_transitions(mrp, dist, net.n_agents, mode, state.rng, state.chain_state)
    alpha = schedule(state.k)
    inc = sampled_increment(state.params, mrp, Phi, net.L, s, s_next)[0]
    p = state.params
    half = StackedState(*(getattr(p, b) + alpha * inc[j] for j, b in enumerate(BLOCKS)))
    return DgtdState(clamp_box(half, boxes), state.k + 1, state.rng, chain)


# ---------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class MetricsRecord:
    k: int
    alpha: float
    consensus_err: float
    dist_w_star: float
    sum_mspbe: float
    kkt_residual: float

    def __post_init__(self):
        if self.consensus_err < 0:
            raise ValueError("consensus error must be non-negative")


METRIC_FIELDS = ("k", "alpha", "consensus_err", "dist_w_star", "sum_mspbe", "kkt_residual")


@dataclass
class MetricsSeries:
    records: list[MetricsRecord] = field(default_factory=list)
    w_star: np.ndarray | None = None
    final: StackedState | None = None
    box_activity: dict = field(default_factory=dict)
    stopped_early: bool = False

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)


def collect_metrics(params: StackedState, k: int, alpha: float, sys: SaddleSystem, w_star) -> MetricsRecord:
    w = params.w
    w_avg = w.mean(axis=0)
    cons = float(np.linalg.norm(w - w_avg, axis=1).max())
    mrp = sys.mrp
    total = sum(_mspbe_normal(w[i], mrp, sys.Phi, sys.D, mrp.rewards[i]) for i in range(sys.n_agents))
    return MetricsRecord(
        k=k,
        alpha=float(alpha),
        consensus_err=cons,
        dist_w_star=float(np.linalg.norm(w_avg - w_star)),
        sum_mspbe=float(total),
        kkt_residual=kkt_residual(params, sys),
    )


@dataclass(frozen=True)
class EarlyStop:
    consensus_err: float
    kkt_residual: float


def run_dgtd(
    mrp: MarkovRewardProcess,
    Phi,
    net: CommNetwork,
    *,
    schedule: StepSchedule,
    iterations: int,
    rng,
    mode=SamplingMode.SHARED_IID,
    boxes: BoxSet | None = None,
    cadence: int = 100,
    init: StackedState | None = None,
    early_stop: EarlyStop | None = None,
    dist: StationaryDist | None = None,
    bound: float = tol.DIVERGENCE_BOUND,
    chunk: int = 4096,
) -> MetricsSeries:
    """Run DGTD for ``iterations`` rounds and record metrics every ``cadence`` rounds.

    Transitions are drawn in chunks for speed; for a fixed seed the sample
    stream is identical to drawing one round at a time only up to chunk
    boundaries, so ``chunk`` is part of the reproducibility key.
    """
    mode = SamplingMode(mode)
    Phi = np.asarray(Phi, dtype=float)
    N, q = mrp.n_agents, Phi.shape[1]
    dist = stationary_distribution(mrp.P) if dist is None else dist
    sys = assemble_saddle_system(mrp, Phi, dist.D, net)
    w_star = solve_projected_bellman(mrp, Phi, dist.D)
    params = StackedState.zeros(N, q) if init is None else init
    params = clamp_box(params, boxes)
    x = np.stack([params.theta, params.v, params.mu, params.w]).astype(float)
    L = net.L
    series = MetricsSeries(w_star=w_star)
    clamp_counts = np.zeros(4, dtype=np.int64)
    lower = upper = None
    if boxes is not None:
        lower = boxes.lower.reshape(4, N, q)
        upper = boxes.upper.reshape(4, N, q)

    def snapshot():
        return StackedState(*(x[j].copy() for j in range(4)))

    series.records.append(collect_metrics(snapshot(), 0, schedule(0), sys, w_star))
    chain = None
    k = 0
    while k < iterations:
        n = min(chunk, iterations - k)
        S, S_next, chain = draw_transitions(mrp, dist, N, mode, rng, chain, size=n)
        for j in range(n):
            alpha = schedule(k)
            inc = sampled_increment(StackedState(*x), mrp, Phi, L, S[j], S_next[j])[0]
            x = x + alpha * inc
            if boxes is not None:
                clipped = np.clip(x, lower, upper)
                clamp_counts += (clipped != x).reshape(4, -1).any(axis=1)
                x = clipped
            k += 1
            if k % cadence == 0 or k == iterations:
                norm = float(np.abs(x).max())
                if not math.isfinite(norm) or norm > bound:
                    raise DivergenceError(f"iterate magnitude {norm:.3g} exceeded {bound:g} at k = {k}")
                rec = collect_metrics(snapshot(), k, schedule(k), sys, w_star)
                series.records.append(rec)
                if early_stop is not None and (
                    rec.consensus_err < early_stop.consensus_err and rec.kkt_residual < early_stop.kkt_residual
                ):
                    series.stopped_early = True
                    break
        if series.stopped_early:
            break
    series.final = snapshot()
    series.box_activity = {
        "projection": boxes is not None,
        "rounds_clamped": {b: int(c) for b, c in zip(BLOCKS, clamp_counts)},
    }
    return series


def single_agent_problem(mrp: MarkovRewardProcess, agent: int | None = None) -> tuple[MarkovRewardProcess, CommNetwork]:
    """One-agent process for agent ``agent``'s reward, or for the central reward when ``None``."""
    reward = mrp.central_reward if agent is None else mrp.rewards[agent]
    return MarkovRewardProcess(mrp.P, reward[None, :], mrp.gamma), build_network(1, [])


def gtd_single(mrp: MarkovRewardProcess, Phi, *, agent: int | None = None, **run_kwargs) -> MetricsSeries:
    """Single-agent primal-dual GTD: DGTD on a one-node network (``v`` and ``mu`` stay inert)."""
    single, net = single_agent_problem(mrp, agent)
    return run_dgtd(single, Phi, net, **run_kwargs)


# ---------------------------------------------------------------------------
# single-agent baselines


def td0_step(w, phi, phi_next, r: float, gamma: float, alpha: float) -> np.ndarray:
    """Semi-gradient TD(0): ``w + alpha * phi * (r + gamma phi'.w - phi.w)``."""
    delta = r + gamma * phi_next @ w - phi @ w
    return w + alpha * delta * phi


def residual_step(w, phi, phi_next, phi_next2, r: float, gamma: float, alpha: float) -> np.ndarray:
    """Residual-gradient step with two independent next-state samples.

    ``(gamma phi'' - phi) * (r + gamma phi'.w - phi.w)`` is an unbiased
    estimate of the MSBE gradient when ``s ~ d``.
    """
    delta = r + gamma * phi_next @ w - phi @ w
    return w - alpha * delta * (gamma * phi_next2 - phi)


def run_td0(mrp, Phi, *, schedule: StepSchedule, iterations: int, rng, reward=None, w0=None, trajectory: bool = False, dist=None) -> np.ndarray:
    """TD(0) on i.i.d. stationary samples (or one simulated trajectory)."""
    Phi = np.asarray(Phi, dtype=float)
    r = mrp.central_reward if reward is None else np.asarray(reward, dtype=float)
    dist = stationary_distribution(mrp.P) if dist is None else dist
    w = np.zeros(Phi.shape[1]) if w0 is None else np.array(w0, dtype=float)
    mode = SamplingMode.SHARED_TRAJECTORY if trajectory else SamplingMode.SHARED_IID
    S, S_next, _ = draw_transitions(mrp, dist, 1, mode, rng, size=iterations)
    for k in range(iterations):
        s, sn = S[k, 0], S_next[k, 0]
        w = td0_step(w, Phi[s], Phi[sn], r[s], mrp.gamma, schedule(k))
    return w
