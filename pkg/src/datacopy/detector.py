"""Data-copying detector: per-training-point copy radii and the copy-rate estimate."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .geometry import BallIndex, as_point, as_points, distances_to
from .mass import (
    DEFAULT_B,
    EstimatorConfig,
    InsufficientDataError,
    estimate_k,
    interpolated_mass,
)

DEFAULT_M = 200_000


class SamplerFailure(RuntimeError):
    pass


def theoretical_m(d, n, delta, epsilon):
    """Guarantee-mode generated-sample size.

    ``ceil(2048 n^2 (d+2) ln(98304 n^2 (d+2) / (delta eps^2 e^2)) / (eps^2 e^2))``
    with ``e = min(eps, 1)``.
    """
    if d < 1 or n < 1:
        raise ValueError("d and n must be positive")
    if not 0 < delta < 1 or not epsilon > 0:
        raise ValueError("need 0 < delta < 1 and epsilon > 0")
    scale = epsilon**2 * min(epsilon, 1.0) ** 2
    lead = n**2 * (d + 2)
    return math.ceil(2048 * lead * math.log(98304 * lead / (delta * scale)) / scale)


def default_u_size(epsilon, delta):
    """Size of the fresh sample used to measure the union mass: ``ceil(20 ln(1/delta) / eps^2)``."""
    if not 0 < delta < 1 or not epsilon > 0:
        raise ValueError("need 0 < delta < 1 and epsilon > 0")
    return math.ceil(20 * math.log(1 / delta) / epsilon**2)


@dataclass(frozen=True)
class DetectionParams:
    lam: float = 20.0
    gamma: float = 0.00025
    epsilon: float = 0.1
    delta: float = 0.05
    m: int = DEFAULT_M
    u_size: int | None = None
    b: int = DEFAULT_B
    k: int | str = "auto"
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 1:
            raise ValueError(f"lambda must exceed 1, got {self.lam}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.u_size is not None and (int(self.u_size) != self.u_size or self.u_size < 1):
            raise ValueError("u_size must be a positive integer")
        if int(self.b) != self.b or self.b < 1:
            raise ValueError("b must be a positive integer")
        if self.k != "auto" and (int(self.k) != self.k or self.k < 1):
            raise ValueError("k must be a positive integer or 'auto'")
        if not -(2**63) <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def resolved_u_size(self):
        return self.u_size if self.u_size is not None else default_u_size(self.epsilon, self.delta)


@dataclass(frozen=True)
class CopyRegion:
    train_index: int
    radius: float


@dataclass
class DetectionReport:
    """Outcome of one detector run.

    ``radii[i]`` is the copy radius of training point ``i``; NaN means no
    candidate radius qualified (only possible when ``b`` training points
    coincide).
    """

    cr_hat: float
    v_count: int
    u_used: int
    m_used: int
    radii: np.ndarray
    k: int
    b: int
    params: dict
    seed: int
    elapsed: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def regions(self):
        return [CopyRegion(i, float(r)) for i, r in enumerate(self.radii) if not np.isnan(r)]

    @property
    def n_active(self):
        """Number of training points with a positive copy radius."""
        return int(np.count_nonzero(self.radii > 0))

    def to_dict(self):
        return {
            "cr_hat": self.cr_hat,
            "v_count": self.v_count,
            "u_used": self.u_used,
            "m_used": self.m_used,
            "k": self.k,
            "b": self.b,
            "seed": self.seed,
            "params": dict(self.params),
            "regions": [
                {"train_index": i, "radius": None if np.isnan(r) else float(r)}
                for i, r in enumerate(self.radii)
            ],
            "elapsed": self.elapsed,
            "extra": dict(self.extra),
        }

    @classmethod
    def from_dict(cls, d):
        radii = np.array(
            [np.nan if reg["radius"] is None else reg["radius"] for reg in d["regions"]],
            dtype=np.float64,
        )
        return cls(
            cr_hat=d["cr_hat"], v_count=d["v_count"], u_used=d["u_used"], m_used=d["m_used"],
            radii=radii, k=d["k"], b=d["b"], params=d["params"], seed=d["seed"],
            elapsed=d.get("elapsed", 0.0), extra=d.get("extra", {}),
        )


def resolve_k(S, k, delta=0.05, k_epsilon=1.0, k_b=None):
    if k != "auto":
        return int(k)
    return estimate_k(S, EstimatorConfig(epsilon=k_epsilon, delta=delta, b_override=k_b))


def find_copy_radius(x_i, S, T, params):
    """Reference (linear-scan) copy radius of ``x_i``.

    Candidates are the distances from ``x_i`` to every generated point plus 0.
    Among those with estimated training mass at most ``gamma``, the largest
    with empirical generated mass at least ``lam`` times the estimate wins.
    """
    S = as_points(S, name="S")
    T = as_points(T, dim=S.shape[1], name="T")
    x_i = as_point(x_i, dim=S.shape[1], name="x_i")
    n, m = len(S), len(T)
    if n < params.b:
        raise InsufficientDataError(f"insufficient training data for threshold b={params.b} (n={n})")
    k = resolve_k(S, params.k, params.delta)
    d_s = np.sort(distances_to(S, x_i))
    d_t = np.sort(distances_to(T, x_i))
    cand = np.concatenate([[0.0], d_t])
    est = interpolated_mass(cand, d_s[params.b - 1], params.b, n, k,
                            np.searchsorted(d_s, cand, side="right"))
    q = np.searchsorted(d_t, cand, side="right") / m
    ok = (est <= params.gamma) & (q >= params.lam * est)
    return float(cand[ok].max()) if ok.any() else math.nan


class DataCopyDetector(BaseEstimator):
    """Estimate the fraction of a generative model's output that copies training points.

    ``fit`` takes the training sample; ``detect`` draws ``m`` generated points
    to locate a copy region around every training point, then ``u_size`` fresh
    points to measure the mass of the union of those regions.

    Parameters
    ----------
    lam : float
        Over-representation factor (> 1).
    gamma : float
        Largest training mass of a copy region, in (0, 1).
    epsilon, delta : float
        Tolerance and failure probability; set the default ``u_size``.
    m : int
        Number of generated points used to find copy regions.
    u_size : int or None
        Number of generated points used to measure the union; defaults to
        ``ceil(20 ln(1/delta) / epsilon^2)``.
    b : int
        Training points in the reference ball of the mass estimator.
    k : int or "auto"
        Regularity exponent; "auto" estimates it from the training data.
    k_epsilon, k_b : float, int or None
        Settings for the automatic estimate of ``k``.
    random_state : int
        Seed of the stream from which the generated samples are drawn.
    n_jobs : int
        Threads for neighbour queries. Results never depend on it.
    """

    def __init__(self, lam=20.0, gamma=0.00025, epsilon=0.1, delta=0.05, m=DEFAULT_M,
                 u_size=None, b=DEFAULT_B, k="auto", k_epsilon=1.0, k_b=None,
                 random_state=0, n_jobs=1):
        self.lam = lam
        self.gamma = gamma
        self.epsilon = epsilon
        self.delta = delta
        self.m = m
        self.u_size = u_size
        self.b = b
        self.k = k
        self.k_epsilon = k_epsilon
        self.k_b = k_b
        self.random_state = random_state
        self.n_jobs = n_jobs

    @property
    def params(self):
        return DetectionParams(
            lam=self.lam, gamma=self.gamma, epsilon=self.epsilon, delta=self.delta,
            m=self.m, u_size=self.u_size, b=self.b, k=self.k, seed=self.random_state,
        )

    def fit(self, X, y=None):
        params = self.params
        X = as_points(X, name="training sample")
        n = len(X)
        if n < params.b:
            raise InsufficientDataError(
                f"insufficient training data for threshold b={params.b} (n={n})"
            )
        self.train_ = X
        self.n_samples_, self.n_features_in_ = X.shape
        self.k_ = resolve_k(X, params.k, params.delta, self.k_epsilon, self.k_b)
        self.index_ = BallIndex(X, workers=self.n_jobs)
        self.r_star_ = self.index_.kth_distance(X, params.b)
        self.search_radius_ = self._search_radius()
        return self

    def _search_radius(self):
        """Radius beyond which no candidate can pass the ``gamma`` filter."""
        n, b, k, gamma = self.n_samples_, self.b, self.k_, self.gamma
        if gamma < b / n:
            # interpolation branch caps the radius; slack covers rounding in est
            return self.r_star_ * (gamma * n / b) ** (1.0 / k) * (1 + 1e-9)
        # one extra neighbour guards against rounding in gamma * n
        j = math.floor(gamma * n) + 2
        if j > n:
            return np.full(n, np.inf)
        return self.index_.kth_distance(self.train_, j)

    def copy_radii(self, T):
        """Copy radius of every training point given generated sample ``T``."""
        check_is_fitted(self, "index_")
        T = as_points(T, dim=self.n_features_in_, name="generated sample")
        n, m, b, k = self.n_samples_, len(T), self.b, self.k_
        t_index = BallIndex(T, workers=self.n_jobs)
        R = self.search_radius_
        t_hits = t_index.within_many(self.train_, R)
        s_hits = self.index_.within_many(self.train_, R)
        radii = np.full(n, np.nan)
        lam, gamma = self.lam, self.gamma
        for i in range(n):
            d_t = t_hits[i][1]
            d_s = s_hits[i][1]
            cand = np.concatenate([[0.0], d_t])
            est = interpolated_mass(cand, self.r_star_[i], b, n, k,
                                    np.searchsorted(d_s, cand, side="right"))
            q = np.searchsorted(d_t, cand, side="right") / m
            ok = (est <= gamma) & (q >= lam * est)
            if ok.any():
                radii[i] = cand[ok].max()
        return radii

    def in_copy_region(self, U, radii=None):
        """Boolean mask: which rows of ``U`` fall in the union of copy regions."""
        check_is_fitted(self, "index_")
        radii = self.radii_ if radii is None else np.asarray(radii, dtype=np.float64)
        U = as_points(U, dim=self.n_features_in_, name="points")
        active = np.flatnonzero(radii >= 0)
        mask = np.zeros(len(U), dtype=bool)
        if active.size == 0 or len(U) == 0:
            return mask
        centers = BallIndex(self.train_[active], workers=self.n_jobs)
        r_act = radii[active]
        for j, (idx, d) in enumerate(centers.within_many(U, float(r_act.max()))):
            if idx.size and np.any(d <= r_act[idx]):
                mask[j] = True
        return mask

    def detect(self, sampler):
        """Run the detector against ``sampler`` and return a :class:`DetectionReport`."""
        check_is_fitted(self, "index_")
        t0 = time.perf_counter()
        params = self.params
        u_size = params.resolved_u_size
        rng = np.random.default_rng(params.seed)
        try:
            T = as_points(sampler.sample(params.m, rng), dim=self.n_features_in_, name="T")
            U = as_points(sampler.sample(u_size, rng), dim=self.n_features_in_, name="U")
        except Exception as exc:
            raise SamplerFailure(f"sampler failed while drawing T/U: {exc}") from exc
        if len(T) != params.m or len(U) != u_size:
            raise SamplerFailure(
                f"sampler returned {len(T)}/{len(U)} points, expected {params.m}/{u_size}"
            )
        self.radii_ = self.copy_radii(T)
        v = int(self.in_copy_region(U).sum())
        self.report_ = DetectionReport(
            cr_hat=v / u_size, v_count=v, u_used=u_size, m_used=params.m,
            radii=self.radii_, k=self.k_, b=params.b, params=_param_echo(params),
            seed=int(params.seed), elapsed=time.perf_counter() - t0,
        )
        return self.report_

    def predict(self, X):
        """1 for points inside the copy regions found by the last :meth:`detect`, else 0."""
        check_is_fitted(self, "radii_")
        return self.in_copy_region(X).astype(int)


def _param_echo(params):
    d = asdict(params)
    d["u_size"] = params.resolved_u_size
    return d


def detect(S, q, params=None, n_jobs=1, k_epsilon=1.0, k_b=None):
    """Functional form: fit a :class:`DataCopyDetector` on ``S`` and run it against ``q``."""
    params = params or DetectionParams()
    det = DataCopyDetector(
        lam=params.lam, gamma=params.gamma, epsilon=params.epsilon, delta=params.delta,
        m=params.m, u_size=params.u_size, b=params.b, k=params.k, k_epsilon=k_epsilon,
        k_b=k_b, random_state=params.seed, n_jobs=n_jobs,
    )
    return det.fit(S).detect(q)
