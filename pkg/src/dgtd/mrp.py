"""Finite Markov reward processes under a fixed joint policy.

Actions are marginalized away: a process stores the policy-induced
transition matrix, one expected-reward vector per agent and the discount
factor.  Samplers take an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import tolerances as tol
from .errors import ErgodicityError


@dataclass(frozen=True)
class MarkovRewardProcess:
    P: np.ndarray
    rewards: np.ndarray  # (n_agents, n_states)
    gamma: float

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        rewards = np.atleast_2d(np.array(self.rewards, dtype=float))
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise ValueError(f"transition matrix must be square, got shape {P.shape}")
        if np.any(P < 0):
            raise ValueError("transition matrix has negative entries")
        row_err = np.abs(P.sum(axis=1) - 1.0).max()
        if row_err > tol.ROW_SUM:
            raise ValueError(f"transition matrix rows do not sum to 1 (max deviation {row_err:.3g})")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"discount factor must lie in (0, 1), got {self.gamma}")
        if rewards.shape[0] == 0 or rewards.shape[1] != P.shape[0]:
            raise ValueError(
                f"rewards must be a non-empty (n_agents, {P.shape[0]}) table, got shape {rewards.shape}"
            )
        P.setflags(write=False)
        rewards.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_agents(self) -> int:
        return self.rewards.shape[0]

    @property
    def central_reward(self) -> np.ndarray:
        """Average of the agents' reward vectors."""
        return self.rewards.mean(axis=0)

    @cached_property
    def transition_cdf(self) -> np.ndarray:
        return np.cumsum(self.P, axis=1)


@dataclass(frozen=True)
class StationaryDist:
    d: np.ndarray

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.d)

    @cached_property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.d)


@dataclass(frozen=True)
class Transition:
    s: int
    s_next: int
    reward_per_agent: np.ndarray


def stationary_distribution(P) -> StationaryDist:
    """Solve ``d^T P = d^T`` with ``sum(d) = 1`` directly.

    A linear solve handles periodic chains that defeat plain power
    iteration.  Reducible chains (non-unique solution) and chains with a
    transient state (zero mass somewhere) raise ``ErgodicityError``.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    system = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    sv = np.linalg.svd(system, compute_uv=False)
    if sv[-1] <= tol.RANK_RATIO * sv[0]:
        raise ErgodicityError("stationary distribution is not unique: the chain is reducible")
    d, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    if np.any(d <= 0):
        raise ErgodicityError(f"stationary distribution has non-positive mass (min {d.min():.3g})")
    d = d / d.sum()
    residual = np.abs(d @ P - d).max()
    if residual >= tol.STATIONARY_RESIDUAL:
        raise ErgodicityError(f"stationary residual {residual:.3g} exceeds tolerance")
    d.setflags(write=False)
    return StationaryDist(d)


def power_iteration(P, max_iter: int = 100_000, tol_: float = 1e-13) -> np.ndarray:
    """Cross-check for ``stationary_distribution``; fails on periodic chains."""
    P = np.asarray(P, dtype=float)
    d = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        nxt = d @ P
        if np.abs(nxt - d).max() < tol_:
            return nxt
        d = nxt
    raise ErgodicityError(f"power iteration did not converge in {max_iter} iterations")


def _draw(cdf: np.ndarray, u: float) -> int:
    # clip guards against cdf[-1] landing a hair below 1.0
    return min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)


def draw_states(cdf, u) -> np.ndarray:
    """Vectorized inverse-CDF draws; ``cdf`` is 1-D or one row per draw."""
    cdf = np.asarray(cdf)
    u = np.asarray(u)
    if cdf.ndim == 1:
        idx = np.searchsorted(cdf, u, side="right")
    else:
        idx = (cdf <= u[..., None]).sum(axis=-1)
    return np.minimum(idx, cdf.shape[-1] - 1)


def sample_iid(mrp: MarkovRewardProcess, dist: StationaryDist, rng) -> Transition:
    """Draw ``s ~ d`` and ``s' ~ P[s]``."""
    s = _draw(dist.cdf, rng.random())
    s_next = _draw(mrp.transition_cdf[s], rng.random())
    return Transition(s, s_next, mrp.rewards[:, s].copy())


def sample_trajectory(mrp: MarkovRewardProcess, current_state: int, rng) -> Transition:
    """Advance the chain one step from ``current_state``."""
    if not 0 <= current_state < mrp.n_states:
        raise IndexError(f"state {current_state} out of range [0, {mrp.n_states})")
    s_next = _draw(mrp.transition_cdf[current_state], rng.random())
    return Transition(current_state, s_next, mrp.rewards[:, current_state].copy())


def sample_double(mrp: MarkovRewardProcess, dist: StationaryDist, rng) -> tuple[Transition, int]:
    """Like ``sample_iid`` with a second, independent draw of the next state."""
    first = sample_iid(mrp, dist, rng)
    second = _draw(mrp.transition_cdf[first.s], rng.random())
    return first, second


def trading_rewards(state_values, bounds, lower: float = 10.0) -> np.ndarray:
    """Expected rewards of buy/sell threshold policies.

    Agent ``i`` buys (reward ``-s``) when ``lower <= s <= bounds[i]`` and
    sells (reward ``+s``) otherwise.
    """
    s = np.asarray(state_values, dtype=float)
    return np.array([np.where((lower <= s) & (s <= b), -s, s) for b in bounds])


def random_mrp(n_states: int, n_agents: int, reward_spec, gamma: float, rng) -> MarkovRewardProcess:
    """Random chain with strictly positive (hence ergodic) rows.

    ``reward_spec`` is one of ``"constant"`` (agent ``i`` earns ``i``,
    1-based), ``"gaussian"`` (standard normal table), ``"trading"``
    (buy/sell thresholds on prices 10, 20, ... with upper bounds
    30, 40, ...), or an explicit ``(n_agents, n_states)`` array.
    """
    if n_states < 2:
        raise ValueError(f"need at least 2 states, got {n_states}")
    if n_agents < 1:
        raise ValueError(f"need at least 1 agent, got {n_agents}")
    P = rng.dirichlet(np.ones(n_states), size=n_states)
    P = np.maximum(P, 1e-12)
    P /= P.sum(axis=1, keepdims=True)
    if isinstance(reward_spec, str):
        if reward_spec == "constant":
            rewards = np.repeat(np.arange(1, n_agents + 1, dtype=float)[:, None], n_states, axis=1)
        elif reward_spec == "gaussian":
            rewards = rng.normal(size=(n_agents, n_states))
        elif reward_spec == "trading":
            values = 10.0 * np.arange(1, n_states + 1)
            rewards = trading_rewards(values, [30.0 + 10.0 * i for i in range(n_agents)])
        else:
            raise ValueError(f"unknown reward spec {reward_spec!r}")
    else:
        rewards = np.asarray(reward_spec, dtype=float)
        if rewards.shape != (n_agents, n_states):
            raise ValueError(f"reward table must have shape {(n_agents, n_states)}, got {rewards.shape}")
    return MarkovRewardProcess(P, rewards, gamma)
