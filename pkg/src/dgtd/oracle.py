"""Exact model-based computations.

Everything here uses the known transition matrix and rewards: Bellman-error
losses and their gradients, the projected Bellman solution, the stacked
saddle-point system ``x' = -A x - b`` of the primal-dual consensus
formulation, its stationary set, KKT residuals and ODE integration.

Stacked vectors use the block order (theta, v, mu, w); inside each block
the agents' ``q``-vectors are concatenated agent by agent, so a block
reshapes to ``(n_agents, q)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import tolerances as tol
from .errors import ConsistencyError, DivergenceError, SingularSystemError
from .mrp import MarkovRewardProcess
from .network import CommNetwork, laplacian_kron

BLOCKS = ("theta", "v", "mu", "w")


# ---------------------------------------------------------------------------
# single-agent losses


def _bellman_residual(w, mrp, Phi, reward):
    Phi = np.asarray(Phi)
    r = mrp.central_reward if reward is None else np.asarray(reward, dtype=float)
    return r + mrp.gamma * mrp.P @ (Phi @ w) - Phi @ w


def msbe(w, mrp: MarkovRewardProcess, Phi, D, reward=None) -> float:
    """Half the D-weighted squared Bellman residual.  ``reward`` defaults to the central reward."""
    e = _bellman_residual(np.asarray(w, dtype=float), mrp, Phi, reward)
    return 0.5 * float(e @ np.asarray(D) @ e)


def _mspbe_normal(w, mrp, Phi, D, reward=None) -> float:
    Phi, D = np.asarray(Phi), np.asarray(D)
    e = _bellman_residual(np.asarray(w, dtype=float), mrp, Phi, reward)
    g = Phi.T @ D @ e
    return 0.5 * float(g @ np.linalg.solve(Phi.T @ D @ Phi, g))


def mspbe(w, mrp: MarkovRewardProcess, Phi, D, reward=None) -> float:
    """Half the D-weighted squared projected Bellman residual.

    Evaluated both through the projector and through the normal-equation
    form; a disagreement beyond round-off raises ``ConsistencyError``.
    """
    from .approx import projection_matrix

    Phi, D = np.asarray(Phi), np.asarray(D)
    e = _bellman_residual(np.asarray(w, dtype=float), mrp, Phi, reward)
    pe = projection_matrix(Phi, D) @ e
    via_projector = 0.5 * float(pe @ D @ pe)
    via_normal = _mspbe_normal(w, mrp, Phi, D, reward)
    scale = max(1.0, abs(via_projector), 0.5 * float(e @ D @ e))
    if abs(via_projector - via_normal) > 1e-10 * scale:
        raise ConsistencyError(f"MSPBE forms disagree: {via_projector!r} vs {via_normal!r}")
    return via_normal


def mspbe_gradient(w, mrp: MarkovRewardProcess, Phi, D, rewards=None) -> np.ndarray:
    """Gradient in ``w`` of the sum of per-agent MSPBEs.

    ``rewards`` is an ``(n, n_states)`` table and defaults to all agents'
    rewards; pass a single row for a one-agent loss.
    """
    Phi, D = np.asarray(Phi), np.asarray(D)
    R = mrp.rewards if rewards is None else np.atleast_2d(np.asarray(rewards, dtype=float))
    w = np.asarray(w, dtype=float)
    K = np.eye(mrp.n_states) - mrp.gamma * mrp.P
    B = Phi.T @ D @ K @ Phi
    M = Phi.T @ D @ Phi
    total = (R - (K @ Phi @ w)[None, :]).sum(axis=0)
    return -B.T @ np.linalg.solve(M, Phi.T @ D @ total)


def solve_projected_bellman(mrp: MarkovRewardProcess, Phi, D, reward=None) -> np.ndarray:
    """Fixed point of ``Pi(r + gamma P Phi w) = Phi w`` for ``r`` (default: central reward)."""
    from .approx import projection_matrix

    Phi, D = np.asarray(Phi), np.asarray(D)
    r = mrp.central_reward if reward is None else np.asarray(reward, dtype=float)
    B = Phi.T @ D @ (np.eye(mrp.n_states) - mrp.gamma * mrp.P) @ Phi
    if np.linalg.cond(B) > 1e12:
        raise SingularSystemError("Phi^T D (I - gamma P) Phi is singular")
    w = np.linalg.solve(B, Phi.T @ D @ r)
    Pi = projection_matrix(Phi, D)
    residual = np.abs(Pi @ (r + mrp.gamma * mrp.P @ Phi @ w) - Phi @ w).max()
    scale = max(1.0, np.abs(Phi @ w).max())
    if residual > tol.BELLMAN_RESIDUAL * scale:
        raise ConsistencyError(f"projected Bellman residual {residual:.3g} exceeds tolerance")
    return w


# ---------------------------------------------------------------------------
# stacked saddle-point system


@dataclass(frozen=True)
class StackedState:
    theta: np.ndarray
    v: np.ndarray
    mu: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(getattr(self, b)) for b in BLOCKS}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise ValueError(f"blocks must share one (n_agents, q) shape, got {shapes}")

    @classmethod
    def zeros(cls, n_agents: int, q: int) -> "StackedState":
        return cls(*(np.zeros((n_agents, q)) for _ in BLOCKS))

    @classmethod
    def from_vector(cls, x, n_agents: int, q: int) -> "StackedState":
        x = np.asarray(x, dtype=float).reshape(4, n_agents, q)
        return cls(*(x[k].copy() for k in range(4)))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(getattr(self, b)) for b in BLOCKS])


def _as_vector(x) -> np.ndarray:
    if isinstance(x, StackedState):
        return x.to_vector()
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class SaddleSystem:
    A: np.ndarray
    b: np.ndarray
    n_agents: int
    q: int
    M: np.ndarray  # Phi^T D Phi
    B: np.ndarray  # Phi^T D (I - gamma P) Phi
    Lbar: np.ndarray
    c: np.ndarray  # stacked Phi^T D r_i
    mrp: MarkovRewardProcess = field(repr=False)
    Phi: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    net: CommNetwork = field(repr=False)

    @property
    def dim(self) -> int:
        return 4 * self.n_agents * self.q

    def block(self, name: str) -> slice:
        n = self.n_agents * self.q
        k = BLOCKS.index(name)
        return slice(k * n, (k + 1) * n)

    @cached_property
    def Mbar(self) -> np.ndarray:
        return np.kron(np.eye(self.n_agents), self.M)

    @cached_property
    def Bbar(self) -> np.ndarray:
        return np.kron(np.eye(self.n_agents), self.B)

    def drift(self, x) -> np.ndarray:
        """Right-hand side ``-A x - b``."""
        return -(self.A @ _as_vector(x)) - self.b

    @cached_property
    def decay_rate(self) -> float:
        """Smallest real part over the nonzero eigenvalues of ``A``."""
        ev = np.linalg.eigvals(self.A)
        nz = ev[np.abs(ev) > 1e-8 * max(1.0, np.abs(ev).max())]
        return float(nz.real.min())


def assemble_saddle_system(mrp: MarkovRewardProcess, Phi, D, net: CommNetwork) -> SaddleSystem:
    """Build ``A`` and ``b`` of the primal-dual gradient flow.

    Block rows (theta, v, mu, w)::

        [ M    0    0    B  ]        [-c]
        [ 0    I    0   -L  ]        [ 0]
        [ 0    0    0   -L  ]   b =  [ 0]
        [-B^T  L    L    0  ]        [ 0]

    with ``M = I_N kron Phi^T D Phi``, ``B = I_N kron Phi^T D (I - gamma P) Phi``,
    ``L = Laplacian kron I_q`` and ``c`` the stacked ``Phi^T D r_i``.
    """
    Phi, D = np.asarray(Phi, dtype=float), np.asarray(D, dtype=float)
    N, q = mrp.n_agents, Phi.shape[1]
    if net.n_agents != N:
        raise ValueError(f"network has {net.n_agents} nodes but the process has {N} agents")
    M = Phi.T @ D @ Phi
    B = Phi.T @ D @ (np.eye(mrp.n_states) - mrp.gamma * mrp.P) @ Phi
    Lbar = laplacian_kron(net, q)
    IN = np.eye(N)
    Mbar, Bbar = np.kron(IN, M), np.kron(IN, B)
    Z = np.zeros((N * q, N * q))
    I = np.eye(N * q)
    A = np.block(
        [
            [Mbar, Z, Z, Bbar],
            [Z, I, Z, -Lbar],
            [Z, Z, Z, -Lbar],
            [-Bbar.T, Lbar, Lbar, Z],
        ]
    )
    c = (Phi.T @ D @ mrp.rewards.T).T.ravel()
    b = np.concatenate([-c, np.zeros(3 * N * q)])
    A.setflags(write=False)
    b.setflags(write=False)
    return SaddleSystem(A, b, N, q, M, B, Lbar, c, mrp, Phi, D, net)


@dataclass(frozen=True)
class StationarySet:
    """Stationary points of the flow: fixed theta, v, w and an affine set of mu."""

    theta_star: np.ndarray
    v_star: np.ndarray
    w_star: np.ndarray
    mu_particular: np.ndarray
    mu_nullbasis: np.ndarray  # columns span {1 kron z}
    mu_rhs: np.ndarray  # right-hand side of L mu = B^T theta*

    @property
    def w_consensus(self) -> np.ndarray:
        """The common per-agent value-function weights."""
        q = self.mu_nullbasis.shape[1]
        return self.w_star[:q].copy()

    def point(self, mu=None) -> np.ndarray:
        mu = self.mu_particular if mu is None else mu
        return np.concatenate([self.theta_star, self.v_star, mu, self.w_star])

    def blocks_radius(self) -> float:
        """Largest absolute coordinate over theta*, v*, w* and the particular mu."""
        return float(np.abs(self.point()).max())


def stationary_set(sys: SaddleSystem) -> StationarySet:
    """Closed-form stationary set of ``x' = -A x - b``.

    ``w`` is the projected Bellman solution for the central reward copied to
    every agent, ``v`` is zero, ``theta`` follows from the first block row
    and ``mu`` is the minimum-norm solution of ``L mu = B^T theta`` plus the
    consensus null space.
    """
    mrp, Phi, D = sys.mrp, sys.Phi, sys.D
    N, q = sys.n_agents, sys.q
    w = solve_projected_bellman(mrp, Phi, D)
    w_bar = np.tile(w, N)
    K = np.eye(mrp.n_states) - mrp.gamma * mrp.P
    resid = mrp.rewards - (K @ Phi @ w)[None, :]  # r_i - Phi w + gamma P Phi w
    theta = np.linalg.solve(sys.M, Phi.T @ D @ resid.T).T.ravel()
    rhs = sys.Bbar.T @ theta
    mu, *_ = np.linalg.lstsq(sys.Lbar, rhs, rcond=None)
    residual = np.linalg.norm(sys.Lbar @ mu - rhs)
    if residual > tol.KKT * max(1.0, np.linalg.norm(rhs)):
        raise ConsistencyError(f"mu equation is inconsistent (residual {residual:.3g})")
    null = np.kron(np.ones((N, 1)), np.eye(q)) / np.sqrt(N)
    return StationarySet(theta, np.zeros(N * q), w_bar, mu, null, rhs)


def mu_distance_to_set(mu, stat: StationarySet, sys: SaddleSystem) -> float:
    """Euclidean distance from ``mu`` to the affine set ``{L mu = B^T theta*}``."""
    r = sys.Lbar @ np.asarray(mu) - stat.mu_rhs
    return float(np.linalg.norm(np.linalg.pinv(sys.Lbar) @ r))


def distance_to_star(x, stat: StationarySet, sys: SaddleSystem) -> float:
    """Distance of the (theta, v, w) blocks to their stationary values."""
    x = _as_vector(x)
    parts = [
        x[sys.block("theta")] - stat.theta_star,
        x[sys.block("v")] - stat.v_star,
        x[sys.block("w")] - stat.w_star,
    ]
    return float(np.linalg.norm(np.concatenate(parts)))


def kkt_residual(x, sys: SaddleSystem) -> float:
    """Norm of the stacked Lagrangian gradients, ``||A x + b||``."""
    return float(np.linalg.norm(sys.A @ _as_vector(x) + sys.b))


def lyapunov_quadratic(x, x_star) -> float:
    return 0.5 * float(np.sum((_as_vector(x) - _as_vector(x_star)) ** 2))


def lyapunov_bilinear(x, sys: SaddleSystem) -> float:
    """``x^T (A x + b)``."""
    x = _as_vector(x)
    return float(x @ (sys.A @ x + sys.b))


def dual_objective(theta_bar, v_bar, sys: SaddleSystem) -> float:
    """``1/2 theta^T M theta - theta^T c + 1/2 v^T v`` (independent of mu).

    At the optimum ``min psi = -p*`` where ``p*`` is the optimal value of
    the reparameterized primal; substituting the minimizers gives
    ``theta*^T B w* = mu*^T L w* = 0``, so no additive offset remains.
    """
    th, v = np.ravel(theta_bar), np.ravel(v_bar)
    return float(0.5 * th @ sys.Mbar @ th - th @ sys.c + 0.5 * v @ v)


def dual_constraint(theta_bar, v_bar, mu_bar, sys: SaddleSystem) -> np.ndarray:
    return sys.Bbar.T @ np.ravel(theta_bar) - sys.Lbar.T @ np.ravel(v_bar) - sys.Lbar.T @ np.ravel(mu_bar)


def primal_objective(w_bar, sys: SaddleSystem) -> float:
    """Summed MSPBE in stacked form plus the augmentation ``||L w||^2``."""
    w = np.ravel(w_bar)
    e = sys.c - sys.Bbar @ w
    Lw = sys.Lbar @ w
    return float(0.5 * e @ np.linalg.solve(sys.Mbar, e) + Lw @ Lw)


def reparameterized_objective(w_bar, eps_bar, h_bar, sys: SaddleSystem) -> float:
    """``1/2 eps^T M^{-1} eps + 1/2 h^T h``; ``w`` enters only through the constraints."""
    eps, h = np.ravel(eps_bar), np.ravel(h_bar)
    return float(0.5 * eps @ np.linalg.solve(sys.Mbar, eps) + 0.5 * h @ h)


def reparameterized_constraints(w_bar, eps_bar, h_bar, sys: SaddleSystem) -> np.ndarray:
    """Stacked residuals ``[B w + eps - c; L w - h; L w]``."""
    w, eps, h = np.ravel(w_bar), np.ravel(eps_bar), np.ravel(h_bar)
    Lw = sys.Lbar @ w
    return np.concatenate([sys.Bbar @ w + eps - sys.c, Lw - h, Lw])


# ---------------------------------------------------------------------------
# boxes and the projected flow


@dataclass(frozen=True)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, dtype=float), np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in shape")
        if np.any(lo > hi):
            raise ValueError("box has lower > upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, radius, dim: int) -> "BoxSet":
        r = np.broadcast_to(np.asarray(radius, dtype=float), (dim,))
        return cls(-r, r.copy())

    @classmethod
    def from_blocks(cls, sys: SaddleSystem, **radii) -> "BoxSet":
        """Symmetric per-block radii, e.g. ``theta=5, mu=np.inf``."""
        n = sys.n_agents * sys.q
        r = np.concatenate([np.full(n, float(radii.get(b, np.inf))) for b in BLOCKS])
        return cls(-r, r.copy())

    def clamp(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def normal_cone_violation(self, x, direction, atol: float = 1e-12) -> float:
        """How far ``direction`` is from the normal cone of the box at ``x``.

        Free coordinates must have zero component; a coordinate at its upper
        (lower) bound admits any non-negative (non-positive) component.
        """
        x, g = np.asarray(x), np.asarray(direction)
        at_hi = x >= self.upper - atol
        at_lo = x <= self.lower + atol
        viol = np.abs(g).copy()
        viol[at_hi] = np.maximum(0.0, -g[at_hi])
        viol[at_lo] = np.maximum(0.0, g[at_lo])
        viol[at_hi & at_lo] = 0.0
        return float(viol.max()) if viol.size else 0.0

    def tangent_projection(self, x, direction, atol: float = 1e-12) -> np.ndarray:
        """Projection of ``direction`` on the tangent cone of the box at ``x``."""
        x, g = np.asarray(x), np.array(direction, dtype=float)
        g[(x >= self.upper - atol) & (g > 0)] = 0.0
        g[(x <= self.lower + atol) & (g < 0)] = 0.0
        return g


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray  # (n_records, dim)


def _rk4_affine(sys: SaddleSystem, step: float):
    """One RK4 step of ``x' = -A x - b`` as an affine map ``x -> R x + s``.

    For an affine field the four stages collapse exactly into the truncated
    exponential series, so each step costs a single matrix-vector product.
    """
    G = -step * sys.A
    I = np.eye(sys.dim)
    G2 = G @ G
    G3 = G2 @ G
    R = I + G + G2 / 2 + G3 / 6 + G3 @ G / 24
    s = step * (I + G / 2 + G2 / 6 + G3 / 24) @ (-sys.b)
    return R, s


def integrate_ode(
    sys: SaddleSystem,
    x0,
    step: float,
    t_end: float,
    projected: BoxSet | None = None,
    record_every: int = 1,
    bound: float = tol.DIVERGENCE_BOUND,
) -> Trajectory:
    """Integrate the saddle-point flow from ``x0``.

    Unprojected: classical RK4.  Projected: explicit Euler followed by a
    clamp onto the box, which realizes the tangent-cone projection for
    boxes up to O(step^2).  Raises ``DivergenceError`` when the step lies
    outside the method's stability region or the state norm exceeds
    ``bound``.
    """
    if step <= 0 or t_end < 0:
        raise ValueError("step must be positive and t_end non-negative")
    if projected is None:
        R, s = _rk4_affine(sys, step)
    else:
        R = np.eye(sys.dim) - step * sys.A
        s = -step * sys.b
    radius = np.abs(np.linalg.eigvals(R)).max()
    if radius > 1.0 + 1e-9:
        raise DivergenceError(f"step {step:g} is unstable (propagator spectral radius {radius:.6f})")
    n_steps = int(np.ceil(t_end / step - 1e-9))
    x = _as_vector(x0).copy()
    if projected is not None:
        x = projected.clamp(x)
    ts, xs = [0.0], [x.copy()]
    for k in range(1, n_steps + 1):
        x = R @ x + s
        if projected is not None:
            x = projected.clamp(x)
        if k % record_every == 0 or k == n_steps:
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > bound:
                raise DivergenceError(f"state norm exceeded {bound:g} at t = {k * step:g}")
            ts.append(k * step)
            xs.append(x.copy())
    return Trajectory(np.array(ts), np.array(xs))


def ode_diagnostics(traj: Trajectory, sys: SaddleSystem, stat: StationarySet) -> dict:
    """Per-record observables for the ``ode`` CSV."""
    x_star = stat.point()
    mu = traj.x[:, sys.block("mu")]
    return {
        "t": traj.t,
        "V_quadratic": np.array([lyapunov_quadratic(x, x_star) for x in traj.x]),
        "V_bilinear": np.array([lyapunov_bilinear(x, sys) for x in traj.x]),
        "dist_to_star_theta_v_w": np.array([distance_to_star(x, stat, sys) for x in traj.x]),
        "mu_residual_to_set": np.array([mu_distance_to_set(m, stat, sys) for m in mu]),
    }
