"""Three-sample nearest-neighbour test with c-means localisation (the comparison method)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .geometry import as_points, distances_to

Z_THRESHOLD = -3.0
# the conventional "3 sigma" level; note Phi(-3) itself is ~0.00135
P_THRESHOLD = 0.0027


def cmeans(S, c, max_iters=300, seed=0):
    """Lloyd's algorithm from a seeded farthest-point start.

    Returns ``(centroids, assignment)``. Iterates until the assignment stops
    changing or ``max_iters`` is reached; a cluster that empties is re-seeded
    with the point farthest from its current centroid.
    """
    S = as_points(S, name="S")
    n = len(S)
    if not 1 <= c <= n:
        raise ValueError(f"need 1 <= c <= |S|, got c={c}, |S|={n}")
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    chosen = [first]
    nearest = distances_to(S, S[first])
    for _ in range(1, c):
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, distances_to(S, S[nxt]))
    centroids = S[chosen].copy()
    assign = None
    for _ in range(max_iters):
        new = cKDTree(centroids).query(S)[1]
        empty = np.flatnonzero(np.bincount(new, minlength=c) == 0)
        if empty.size:
            spread = np.sqrt(np.einsum("ij,ij->i", S - centroids[new], S - centroids[new]))
            for j in empty:
                far = int(np.argmax(spread))
                new[far] = j
                spread[far] = -1.0
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(c):
            centroids[j] = S[assign == j].mean(axis=0)
    return centroids, assign


class CMeans(BaseEstimator, ClusterMixin):
    def __init__(self, n_clusters=1, max_iter=300, random_state=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        self.cluster_centers_, self.labels_ = cmeans(X, self.n_clusters, self.max_iter, self.random_state)
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = as_points(X, dim=self.cluster_centers_.shape[1])
        return cKDTree(self.cluster_centers_).query(X)[1]


def zu_statistic(p_dists, q_dists):
    """Rank statistic comparing held-out and generated distances to the training set.

    ``delta`` counts pairs with ``p_dists[i] < q_dists[j]`` (strict). The score
    ``z = (delta - nP nQ / 2) / sqrt(nP nQ (nP + nQ + 1) / 12)``; strongly
    negative values mean generated points sit closer to the training data.
    """
    p = np.asarray(p_dists, dtype=np.float64).ravel()
    q = np.asarray(q_dists, dtype=np.float64).ravel()
    if p.size == 0 or q.size == 0:
        raise ValueError("both distance lists must be nonempty")
    delta = int(np.searchsorted(np.sort(p), q, side="left").sum())
    n_p, n_q = p.size, q.size
    z = (delta - n_p * n_q / 2.0) / math.sqrt(n_p * n_q * (n_p + n_q + 1) / 12.0)
    return delta, z


@dataclass
class ClusterStat:
    cluster: int
    n_p: int
    n_q: int
    delta: int | None
    z: float | None


@dataclass
class BaselineReport:
    per_cluster: list = field(default_factory=list)
    min_z: float = math.nan
    p_value: float = math.nan

    def significant(self, alpha=P_THRESHOLD):
        return self.p_value <= alpha

    def to_dict(self):
        return {
            "per_cluster": [vars(c) for c in self.per_cluster],
            "min_z": self.min_z,
            "p_value": self.p_value,
        }


@dataclass(frozen=True)
class BaselineParams:
    c: int = 1
    max_iters: int = 300
    seed: int = 0
    distance_scope: str = "cluster"

    def __post_init__(self):
        if self.c < 1:
            raise ValueError("c must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.distance_scope not in ("cluster", "global"):
            raise ValueError("distance_scope must be 'cluster' or 'global'")


class ThreeSampleTest(BaseEstimator):
    """Clustered three-sample test.

    ``fit`` partitions the training sample with c-means; ``test`` assigns the
    held-out sample ``P`` and generated sample ``Q`` to clusters, computes each
    point's distance to the training data (of its own cluster, or all of it
    with ``distance_scope="global"``) and reports the smallest per-cluster z.
    """

    def __init__(self, n_clusters=1, max_iter=300, random_state=0, distance_scope="cluster"):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.random_state = random_state
        self.distance_scope = distance_scope

    def fit(self, X, y=None):
        BaselineParams(self.n_clusters, self.max_iter, self.random_state, self.distance_scope)
        X = as_points(X, name="S")
        self.train_ = X
        self.clusterer_ = CMeans(self.n_clusters, self.max_iter, self.random_state).fit(X)
        labels = self.clusterer_.labels_
        self.trees_ = [cKDTree(X[labels == j]) for j in range(self.n_clusters)]
        self.global_tree_ = cKDTree(X)
        return self

    def _nn_dist(self, pts, labels):
        out = np.empty(len(pts))
        if self.distance_scope == "global":
            out[:] = self.global_tree_.query(pts)[0]
            return out
        for j, tree in enumerate(self.trees_):
            sel = labels == j
            if sel.any():
                out[sel] = tree.query(pts[sel])[0]
        return out

    def test(self, P, Q):
        check_is_fitted(self, "clusterer_")
        d = self.train_.shape[1]
        P = as_points(P, dim=d, name="P")
        Q = as_points(Q, dim=d, name="Q")
        lp = self.clusterer_.predict(P)
        lq = self.clusterer_.predict(Q)
        dp = self._nn_dist(P, lp)
        dq = self._nn_dist(Q, lq)
        stats_ = []
        for j in range(self.n_clusters):
            a, b = dp[lp == j], dq[lq == j]
            if a.size and b.size:
                delta, z = zu_statistic(a, b)
                stats_.append(ClusterStat(j, int(a.size), int(b.size), delta, float(z)))
            else:
                stats_.append(ClusterStat(j, int(a.size), int(b.size), None, None))
        zs = [s.z for s in stats_ if s.z is not None]
        if not zs:
            raise ValueError("no cluster received points from both P and Q")
        min_z = float(min(zs))
        return BaselineReport(stats_, min_z, float(stats.norm.cdf(min_z)))


def baseline_test(S, P, Q, params=None):
    params = params or BaselineParams()
    est = ThreeSampleTest(params.c, params.max_iters, params.seed, params.distance_scope)
    return est.fit(S).test(P, Q)
