"""Small-ball probability mass estimation under k-regularity, and integer
intrinsic-dimension estimation from a pair of nearest-neighbour radii."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .geometry import BallIndex, as_point, as_points, distances_to

DEFAULT_B = 400


class InsufficientDataError(ValueError):
    pass


class DegenerateRadiiError(ValueError):
    pass


def _check_delta_eps(delta, epsilon):
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")


def theoretical_b(d, n, delta, epsilon):
    """Guarantee-mode interpolation threshold ``ceil(400 (d+2) ln(16n/delta) / min(eps,1)^2)``."""
    if n < 1 or d < 1:
        raise ValueError("d and n must be positive")
    _check_delta_eps(delta, epsilon)
    e = min(epsilon, 1.0)
    return math.ceil(400 * (d + 2) * math.log(16 * n / delta) / e**2)


def estimate_k_b(d, n, delta, epsilon):
    """Threshold used by :func:`estimate_k`: ``ceil(64 (d+2) ln(16n/delta) / eps^2)``."""
    if n < 1 or d < 1:
        raise ValueError("d and n must be positive")
    _check_delta_eps(delta, epsilon)
    return math.ceil(64 * (d + 2) * math.log(16 * n / delta) / epsilon**2)


@dataclass(frozen=True)
class RegularityParams:
    k: int
    b: int = DEFAULT_B

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if int(self.b) != self.b or self.b < 1:
            raise ValueError(f"b must be a positive integer, got {self.b}")


@dataclass(frozen=True)
class EstimatorConfig:
    epsilon: float = 1.0
    delta: float = 0.05
    b_override: int | None = None

    def __post_init__(self):
        _check_delta_eps(self.delta, self.epsilon)
        if self.b_override is not None and self.b_override < 1:
            raise ValueError("b_override must be positive")


def interpolated_mass(r, r_star, b, n, k, counts):
    """Vectorised Est: ``(b/n)(r/r_star)^k`` where ``r_star > r``, else ``counts/n``.

    ``counts`` must hold the closed-ball training counts at ``r``; it is only
    read where the empirical branch applies.
    """
    r = np.asarray(r, dtype=np.float64)
    r_star = np.asarray(r_star, dtype=np.float64)
    interp = r_star > r
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(interp, (b / n) * (r / r_star) ** k, np.asarray(counts) / n)
    return out


def est_mass(x, r, S, params):
    """Estimate ``p(B(x, r))`` from the training sample ``S``.

    Above the radius ``r_*`` of the smallest ball holding ``b`` training
    points the empirical fraction is returned; below it the mass of that ball
    is scaled down by ``(r / r_*)^k``.
    """
    S = as_points(S, name="S")
    x = as_point(x, dim=S.shape[1], name="x")
    n = len(S)
    if n < params.b:
        raise InsufficientDataError(
            f"insufficient training data for threshold b={params.b} (n={n})"
        )
    if not r >= 0:
        raise ValueError(f"radius must be >= 0, got {r}")
    d = np.sort(distances_to(S, x))
    r_star = d[params.b - 1]
    if r_star > r:
        return (params.b / n) * (r / r_star) ** params.k
    return np.count_nonzero(d <= r) / n


class BallMassEstimator(BaseEstimator):
    """Estimator of small-ball masses fitted on a training sample.

    Parameters
    ----------
    b : int
        Number of training points in the reference ball.
    k : int
        Regularity exponent (intrinsic dimension).
    n_jobs : int
        Threads used by the neighbour queries.
    """

    def __init__(self, b=DEFAULT_B, k=1, n_jobs=1):
        self.b = b
        self.k = k
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = as_points(X, name="X")
        RegularityParams(k=self.k, b=self.b)
        if len(X) < self.b:
            raise InsufficientDataError(
                f"insufficient training data for threshold b={self.b} (n={len(X)})"
            )
        self.index_ = BallIndex(X, workers=self.n_jobs)
        self.n_samples_, self.n_features_in_ = X.shape
        return self

    def reference_radius(self, centers):
        """``r_*`` for each center: distance to its ``b``-th nearest training point."""
        check_is_fitted(self, "index_")
        return self.index_.kth_distance(centers, self.b)

    def predict(self, centers, radii):
        """Estimated mass of ``B(center_j, radius_j)`` for each row."""
        check_is_fitted(self, "index_")
        centers = as_points(centers, dim=self.n_features_in_, name="centers")
        radii = np.broadcast_to(np.asarray(radii, dtype=np.float64), (len(centers),))
        if np.any(radii < 0):
            raise ValueError("radii must be >= 0")
        r_star = self.reference_radius(centers)
        counts = np.zeros(len(centers), dtype=np.int64)
        emp = ~(r_star > radii)
        if emp.any():
            counts[emp] = self.index_.count(centers[emp], radii[emp])
        return interpolated_mass(radii, r_star, self.b, self.n_samples_, self.k, counts)


def estimate_k(S, config=None, rng_seed=None):
    """Integer regularity exponent from the ratio of the ``2b``- and ``b``-point radii.

    The anchor is the first point of ``S`` unless ``rng_seed`` is given, in
    which case it is drawn uniformly from ``S``.
    """
    config = config or EstimatorConfig()
    S = as_points(S, name="S")
    n, d = S.shape
    b = config.b_override or estimate_k_b(d, n, config.delta, config.epsilon)
    if n < 2 * b:
        raise InsufficientDataError(f"estimate_k needs |S| >= 2b = {2 * b}, got {n}")
    anchor = 0 if rng_seed is None else int(np.random.default_rng(rng_seed).integers(n))
    dist = np.sort(distances_to(S, S[anchor]))
    s_star, r_star = dist[b - 1], dist[2 * b - 1]
    if not r_star > s_star:
        raise DegenerateRadiiError(
            "degenerate radii; data has duplicates or insufficient spread"
        )
    raw = 1.0 / math.log2(r_star / s_star)
    k_hat = math.floor(raw + 0.5)
    if k_hat < 1:
        raise DegenerateRadiiError(f"inconsistent regularity estimate ({raw:.3g})")
    return k_hat


class RegularityDimensionEstimator(BaseEstimator):
    """sklearn-style wrapper around :func:`estimate_k`; sets ``k_`` on fit."""

    def __init__(self, epsilon=1.0, delta=0.05, b=None, random_state=None):
        self.epsilon = epsilon
        self.delta = delta
        self.b = b
        self.random_state = random_state

    def fit(self, X, y=None):
        cfg = EstimatorConfig(epsilon=self.epsilon, delta=self.delta, b_override=self.b)
        self.k_ = estimate_k(X, cfg, rng_seed=self.random_state)
        return self
