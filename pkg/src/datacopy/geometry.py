"""Euclidean primitives: distances, closed-ball counts and union-of-balls membership.

All balls are closed. Distances are always computed by :func:`distances_to`,
so the tree-accelerated paths in :class:`BallIndex` agree bit-for-bit with the
linear scans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

# relative slack used when asking the tree for a superset / subset of a ball
_TREE_RTOL = 1e-9


class DimensionMismatchError(ValueError):
    pass


def as_points(X, dim=None, name="points"):
    """Validate and return a float64 ``(n, d)`` array of finite coordinates."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if dim is None or arr.size == dim else arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise ValueError(f"{name} must have dimension >= 1")
    if dim is not None and arr.shape[0] and arr.shape[1] != dim:
        raise DimensionMismatchError(f"{name} has dimension {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def as_point(x, dim=None, name="point"):
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if dim is not None and arr.size != dim:
        raise DimensionMismatchError(f"{name} has dimension {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def distances_to(points, center):
    """Canonical l2 distances from each row of ``points`` to ``center``."""
    diff = points - center
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def distance(a, b):
    a = as_point(a, name="a")
    b = as_point(b, dim=a.size, name="b")
    return float(distances_to(a[None, :], b)[0])


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center, name="center"))
        if not self.radius >= 0:
            raise ValueError(f"ball radius must be >= 0, got {self.radius}")


def count_in_ball(ps, ball):
    """Number of points of ``ps`` within the closed ball (linear scan)."""
    ps = as_points(ps, dim=ball.center.size)
    if len(ps) == 0:
        return 0
    return int(np.count_nonzero(distances_to(ps, ball.center) <= ball.radius))


def sorted_distances(ps, center):
    ps = as_points(ps)
    if len(ps) == 0:
        raise ValueError("sorted_distances needs a nonempty point set")
    center = as_point(center, dim=ps.shape[1], name="center")
    return np.sort(distances_to(ps, center))


def union_membership(balls, pt):
    """True iff ``pt`` lies in at least one of the closed balls."""
    pt = as_point(pt)
    for ball in balls:
        if ball.center.size != pt.size:
            raise DimensionMismatchError("ball and point dimensions differ")
        if distances_to(pt[None, :], ball.center)[0] <= ball.radius:
            return True
    return False


class BallIndex:
    """Exact closed-ball queries over a fixed point set.

    A k-d tree proposes candidates with a slightly inflated radius; the final
    inclusion test always uses :func:`distances_to`, so every answer matches
    the linear scan exactly.

    Args:
        points: array of shape (n, d).
        workers: thread count forwarded to the tree queries (-1 = all cores).
    """

    def __init__(self, points, workers=1):
        self.points = as_points(points)
        self.n, self.dim = self.points.shape
        self.workers = workers
        self._tree = cKDTree(self.points) if self.n else None

    def within(self, center, radius):
        """Indices and sorted distances of points with ``dist <= radius``."""
        center = as_point(center, dim=self.dim, name="center")
        if self.n == 0 or radius < 0:
            return np.empty(0, dtype=np.intp), np.empty(0)
        if np.isinf(radius):
            idx = np.arange(self.n)
        else:
            idx = np.asarray(self._tree.query_ball_point(center, float(_inflate(radius))), dtype=np.intp)
        d = distances_to(self.points[idx], center)
        keep = d <= radius
        idx, d = idx[keep], d[keep]
        order = np.argsort(d, kind="stable")
        return idx[order], d[order]

    def within_many(self, centers, radii):
        """:meth:`within` for many centers; returns a list of (idx, dists)."""
        centers = as_points(centers, dim=self.dim, name="centers")
        radii = np.broadcast_to(np.asarray(radii, dtype=np.float64), (len(centers),))
        out = [None] * len(centers)
        finite = np.isfinite(radii) & (radii >= 0)
        if self.n and finite.any():
            rows = np.flatnonzero(finite)
            lists = self._tree.query_ball_point(
                centers[rows], _inflate(radii[rows]), workers=self.workers, return_sorted=False
            )
            for row, cand in zip(rows, lists):
                idx = np.asarray(cand, dtype=np.intp)
                d = distances_to(self.points[idx], centers[row])
                keep = d <= radii[row]
                idx, d = idx[keep], d[keep]
                order = np.argsort(d, kind="stable")
                out[row] = (idx[order], d[order])
        for row in np.flatnonzero(~finite):
            if radii[row] == np.inf:
                out[row] = self.within(centers[row], np.inf)
            else:
                out[row] = (np.empty(0, dtype=np.intp), np.empty(0))
        return out

    def count(self, centers, radii):
        """Exact closed-ball counts for each (center, radius) pair."""
        centers = as_points(centers, dim=self.dim, name="centers")
        radii = np.broadcast_to(np.asarray(radii, dtype=np.float64), (len(centers),)).copy()
        if self.n == 0:
            return np.zeros(len(centers), dtype=np.int64)
        counts = np.empty(len(centers), dtype=np.int64)
        inf = np.isinf(radii)
        counts[inf] = self.n
        fin = ~inf
        if fin.any():
            r = radii[fin]
            lo = self._tree.query_ball_point(
                centers[fin], r * (1 - _TREE_RTOL), workers=self.workers, return_length=True
            )
            hi = self._tree.query_ball_point(
                centers[fin], _inflate(r), workers=self.workers, return_length=True
            )
            res = np.asarray(lo, dtype=np.int64)
            rows = np.flatnonzero(fin)
            for j in np.flatnonzero(np.asarray(lo) != np.asarray(hi)):
                # boundary band: settle with canonical distances
                res[j] = len(self.within(centers[rows[j]], r[j])[0])
            counts[fin] = res
        return counts

    def kth_distance(self, centers, k):
        """Exact k-th smallest distance (1-indexed) from each center to the set."""
        centers = as_points(centers, dim=self.dim, name="centers")
        if not 1 <= k <= self.n:
            raise ValueError(f"k={k} outside [1, {self.n}]")
        d_tree, _ = self._tree.query(centers, k=[k], workers=self.workers)
        d_tree = d_tree[:, 0]
        out = np.empty(len(centers))
        for j, (c, r) in enumerate(zip(centers, d_tree)):
            _, d = self.within(c, float(_inflate(r)))
            out[j] = d[k - 1]
        return out


def _inflate(r):
    return np.asarray(r) * (1 + _TREE_RTOL) + 1e-300
