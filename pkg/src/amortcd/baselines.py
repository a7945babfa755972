"""Classical bivariate direction finders and the fair-coin baseline.

Both regression baselines fit the effect on the cause in each direction and
prefer the direction whose residual is less dependent (by HSIC) on the
regressor. They are compact stand-ins for DirectLiNGAM (linear fits) and a
RESIT/NoGAM-style additive-noise method (kernel ridge fits).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateColumnError
from .scm import GraphLabel

RIDGE = 1e-3
NYSTROM_POINTS = 300
MIN_SAMPLES = 50


@dataclass(frozen=True)
class DirectionDecision:
    graph: GraphLabel
    score_xy: float
    score_yx: float
    tie: bool = False


def _sq_dists(u):
    return (u[:, None] - u[None, :]) ** 2


def median_bandwidth(u):
    """Median of the nonzero pairwise distances."""
    d = np.sqrt(_sq_dists(u)[np.triu_indices(u.size, k=1)])
    d = d[d > 0]
    if d.size == 0:
        raise DegenerateColumnError("all values are identical")
    return float(np.median(d))


def gaussian_gram(u, bandwidth=None):
    u = np.asarray(u, dtype=np.float64)
    bw = median_bandwidth(u) if bandwidth is None else bandwidth
    return np.exp(-_sq_dists(u) / (2.0 * bw * bw))


def hsic_statistic(u, v):
    """Biased HSIC estimate ``tr(K H L H) / n^2`` with median-heuristic Gaussian kernels."""
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ContractError(f"hsic needs two vectors of equal length, got {u.shape} and {v.shape}")
    if u.size < 20:
        raise ContractError(f"hsic needs n >= 20, got {u.size}")
    if np.ptp(u) == 0 or np.ptp(v) == 0:
        raise DegenerateColumnError("hsic input is constant")
    K, L = gaussian_gram(u), gaussian_gram(v)
    Kc = K - K.mean(axis=0, keepdims=True) - K.mean(axis=1, keepdims=True) + K.mean()
    return max(float(np.sum(Kc * L)) / u.size**2, 0.0)


def ols_residual(x, y):
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return y - X @ coef


def krr_residual(x, y, ridge=RIDGE, n_points=NYSTROM_POINTS):
    """Residual of a Gaussian-kernel ridge fit of ``y`` on ``x`` (Nystrom for large n)."""
    n = x.size
    bw = median_bandwidth(x)
    if n <= n_points:
        K = gaussian_gram(x, bw)
        alpha = np.linalg.solve(K + n * ridge * np.eye(n), y - y.mean())
        return y - y.mean() - K @ alpha
    centers = x[np.linspace(0, n - 1, n_points).astype(int)]
    Knm = np.exp(-((x[:, None] - centers[None, :]) ** 2) / (2 * bw * bw))
    Kmm = np.exp(-((centers[:, None] - centers[None, :]) ** 2) / (2 * bw * bw))
    yc = y - y.mean()
    A = Knm.T @ Knm + n * ridge * Kmm + 1e-10 * np.eye(n_points)
    alpha = np.linalg.solve(A, Knm.T @ yc)
    return yc - Knm @ alpha


def _values(d):
    values = d.values if hasattr(d, "values") else np.asarray(d)
    if values.shape[0] < MIN_SAMPLES:
        raise ContractError(f"direction baselines need n >= {MIN_SAMPLES}, got {values.shape[0]}")
    return values[:, 0], values[:, 1]


def _decide(x, y, residual):
    score_xy = -hsic_statistic(x, residual(x, y))
    score_yx = -hsic_statistic(y, residual(y, x))
    if score_xy == score_yx:
        return DirectionDecision(GraphLabel.X_TO_Y, score_xy, score_yx, tie=True)
    graph = GraphLabel.X_TO_Y if score_xy > score_yx else GraphLabel.Y_TO_X
    return DirectionDecision(graph, score_xy, score_yx)


def linear_direction(d):
    return _decide(*_values(d), ols_residual)


def anm_direction(d):
    return _decide(*_values(d), krr_residual)


def random_direction(rng):
    return GraphLabel.X_TO_Y if rng.random() < 0.5 else GraphLabel.Y_TO_X


METHODS = ("linear", "anm", "random")
