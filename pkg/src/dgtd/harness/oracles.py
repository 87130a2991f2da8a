"""Brute-force reference computations used to cross-check the library.

These are deliberately naive: finite differences, dense KKT solves,
bounded least squares and Monte-Carlo averages.  None of them calls the
code path it is meant to check.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import lsq_linear


def central_difference_gradient(f, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def equality_qp(H, f, C, d) -> np.ndarray:
    """Minimize ``1/2 z^T H z + f^T z`` subject to ``C z = d``.

    Solves the dense KKT system by least squares, which returns the
    minimum-norm solution when ``H`` is only semidefinite.
    """
    H, C = np.atleast_2d(H), np.atleast_2d(C)
    n, m = H.shape[0], C.shape[0]
    K = np.block([[H, C.T], [C, np.zeros((m, m))]])
    rhs = np.concatenate([-np.asarray(f, dtype=float), np.asarray(d, dtype=float)])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:n]


def nearest_box_point(x, lower, upper) -> np.ndarray:
    """Euclidean projection onto a box via bounded least squares."""
    x = np.asarray(x, dtype=float)
    return lsq_linear(np.eye(x.size), x, bounds=(lower, upper), tol=1e-14, lsmr_tol="auto").x


def empirical_frequencies(samples, n: int) -> np.ndarray:
    return np.bincount(np.asarray(samples).ravel(), minlength=n) / np.asarray(samples).size


def clt_bound(p, n_samples: int, z: float = 3.0) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return z * np.sqrt(p * (1 - p) / n_samples)


def exact_tabular_values(P, r, gamma: float) -> np.ndarray:
    """``(I - gamma P)^{-1} r``."""
    P = np.asarray(P, dtype=float)
    return np.linalg.solve(np.eye(P.shape[0]) - gamma * P, r)


def monte_carlo_mean(sample_batch, n_samples: int, batch: int = 10_000):
    """Mean and standard error of ``sample_batch(k) -> (k, dim)`` over ``n_samples`` draws."""
    total = None
    total_sq = None
    done = 0
    while done < n_samples:
        k = min(batch, n_samples - done)
        xs = np.asarray(sample_batch(k), dtype=float).reshape(k, -1)
        s, s2 = xs.sum(axis=0), (xs**2).sum(axis=0)
        total = s if total is None else total + s
        total_sq = s2 if total_sq is None else total_sq + s2
        done += k
    mean = total / n_samples
    var = np.maximum(total_sq / n_samples - mean**2, 0.0) * n_samples / max(n_samples - 1, 1)
    return mean, np.sqrt(var / n_samples)
