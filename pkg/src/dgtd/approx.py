"""Linear value-function approximation over a finite state space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .errors import RankError, SingularSystemError


@dataclass(frozen=True)
class FeatureMap:
    """Feature matrix whose row ``s`` is the feature vector of state ``s``."""

    Phi: np.ndarray

    def __post_init__(self):
        Phi = np.array(self.Phi, dtype=float)
        if Phi.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {Phi.shape}")
        n_states, q = Phi.shape
        if q > n_states:
            raise RankError(f"{q} features exceed {n_states} states")
        sv = np.linalg.svd(Phi, compute_uv=False)
        if sv[-1] <= tol.RANK_RATIO * sv[0]:
            raise RankError(
                f"feature matrix is rank deficient: smallest singular value {sv[-1]:.3g} "
                f"vs largest {sv[0]:.3g}"
            )
        Phi.setflags(write=False)
        object.__setattr__(self, "Phi", Phi)

    @property
    def q(self) -> int:
        return self.Phi.shape[1]

    @property
    def n_states(self) -> int:
        return self.Phi.shape[0]


@dataclass(frozen=True)
class RbfSpec:
    centers: np.ndarray
    width: float
    values: np.ndarray = field(default=None)  # scalar coordinate of each state; defaults to the index

    def __post_init__(self):
        centers = np.atleast_1d(np.array(self.centers, dtype=float))
        if not self.width > 0:
            raise ValueError(f"RBF width must be positive, got {self.width}")
        if np.any(np.diff(centers) <= 0):
            raise ValueError("RBF centers must be strictly increasing")
        object.__setattr__(self, "centers", centers)
        if self.values is not None:
            object.__setattr__(self, "values", np.array(self.values, dtype=float))

    @classmethod
    def evenly_spaced(cls, values, q: int, width: float | None = None) -> "RbfSpec":
        """Centers spread over ``[min(values), max(values)]`` inclusive.

        The width defaults to the spacing between adjacent centers.
        """
        values = np.asarray(values, dtype=float)
        lo, hi = values.min(), values.max()
        centers = np.linspace(lo, hi, q)
        if width is None:
            width = (hi - lo) / (q - 1) if q > 1 else max(hi - lo, 1.0)
        return cls(centers, width, values)


def rbf_features(spec: RbfSpec, n_states: int) -> FeatureMap:
    """Gaussian bumps ``exp(-(x(s) - c_j)^2 / (2 width^2))``."""
    x = np.arange(n_states, dtype=float) if spec.values is None else spec.values
    if x.shape != (n_states,):
        raise ValueError(f"state coordinates must have length {n_states}, got {x.shape}")
    Phi = np.exp(-((x[:, None] - spec.centers[None, :]) ** 2) / (2.0 * spec.width**2))
    return FeatureMap(Phi)


def projection_matrix(Phi, D) -> np.ndarray:
    """D-weighted orthogonal projector onto the column span of ``Phi``."""
    Phi = np.asarray(Phi, dtype=float)
    D = np.asarray(D, dtype=float)
    gram = Phi.T @ D @ Phi
    if np.linalg.cond(gram) > 1.0 / tol.RANK_RATIO:
        raise SingularSystemError("Phi^T D Phi is singular")
    Pi = Phi @ np.linalg.solve(gram, Phi.T @ D)
    err = max(np.abs(Pi @ Pi - Pi).max(), np.abs(Pi @ Phi - Phi).max())
    scale = max(1.0, np.abs(Pi).max())
    if err > tol.PROJECTION * scale:
        raise SingularSystemError(f"projection residual {err:.3g} exceeds tolerance")
    return Pi


def value_estimate(Phi, w, s: int) -> float:
    return float(np.asarray(Phi)[s] @ np.asarray(w))
