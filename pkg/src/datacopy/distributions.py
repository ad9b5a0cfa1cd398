"""Synthetic distributions, generated-model samplers and exact ball-mass oracles.

Every distribution exposes ``sample(n, rng)`` and is therefore usable as a
sampling oracle for the detector. Those with closed-form ball masses also
implement ``ball_mass(center, radii)`` and ``union_mass(centers, radii)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .geometry import as_point, as_points, distances_to

TWO_PI = 2.0 * np.pi


def uniform_ball(n, d, rng):
    """``n`` points uniform in the unit ``d``-ball."""
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return g / norms * rng.random((n, 1)) ** (1.0 / d)


def unit_ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _digest(arr):
    return hashlib.sha1(np.ascontiguousarray(arr).tobytes()).hexdigest()[:16]


class Distribution:
    """Base class: a sampler, optionally with exact ball masses."""

    dim: int
    has_exact_mass = False
    p_epsilon_bounds = None

    def sample(self, n, rng):
        raise NotImplementedError

    def ball_mass(self, center, radii):
        raise NotImplementedError(f"{type(self).__name__} has no exact ball-mass oracle")

    def union_mass(self, centers, radii):
        raise NotImplementedError(f"{type(self).__name__} has no exact union-mass oracle")

    def critical_radii(self, center):
        return np.empty(0)

    def cache_key(self):
        parts = [type(self).__name__]
        for key in sorted(vars(self)):
            val = vars(self)[key]
            if isinstance(val, np.ndarray):
                val = _digest(val)
            elif isinstance(val, Distribution):
                val = val.cache_key()
            parts.append(f"{key}={val}")
        return "|".join(parts)


class Halfmoons(Distribution):
    """Two interleaving half circles with isotropic Gaussian noise."""

    dim = 2

    def __init__(self, sigma=0.1):
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.sigma = float(sigma)

    def sample(self, n, rng):
        if n < 0:
            raise ValueError("n must be >= 0")
        outer = rng.random(n) < 0.5
        t = rng.uniform(0.0, np.pi, n)
        x = np.where(outer, np.cos(t), 1.0 - np.cos(t))
        y = np.where(outer, np.sin(t), 0.5 - np.sin(t))
        pts = np.column_stack([x, y])
        if self.sigma > 0:
            pts = pts + self.sigma * rng.standard_normal((n, 2))
        return pts


def sample_halfmoons(n, sigma=0.1, seed=None):
    if n < 1:
        raise ValueError("n must be >= 1")
    return Halfmoons(sigma).sample(n, np.random.default_rng(seed))


class DiskNoise(Distribution):
    """``base`` plus a uniform draw from the ball of the given radius."""

    def __init__(self, base, radius):
        if radius < 0:
            raise ValueError("radius must be >= 0")
        self.base = base
        self.radius = float(radius)
        self.dim = base.dim

    def sample(self, n, rng):
        pts = self.base.sample(n, rng)
        return pts + self.radius * uniform_ball(n, self.dim, rng)


class CopierMixture(Distribution):
    """With probability ``rho`` a jittered copy of a memorised point, else an
    underfit draw from ``base``."""

    def __init__(self, copies, rho, copy_noise, underfit_noise, base):
        if not 0 <= rho <= 1:
            raise ValueError("rho must lie in [0, 1]")
        self.copies = as_points(copies, name="copies")
        self.rho = float(rho)
        self.copy_noise = float(copy_noise)
        self.underfit_noise = float(underfit_noise)
        self.base = base
        self.dim = self.copies.shape[1]

    def sample(self, n, rng):
        is_copy = rng.random(n) < self.rho
        n_copy = int(is_copy.sum())
        out = np.empty((n, self.dim))
        pick = rng.integers(len(self.copies), size=n_copy)
        out[is_copy] = self.copies[pick] + self.copy_noise * uniform_ball(n_copy, self.dim, rng)
        n_under = n - n_copy
        out[~is_copy] = self.base.sample(n_under, rng) + self.underfit_noise * uniform_ball(
            n_under, self.dim, rng
        )
        return out


def make_copier_mixture(S, rho=0.4, copy_count=20, copy_noise=0.02, underfit_noise=0.25,
                        base=None, seed=None):
    """Mixture of a memoriser of ``copy_count`` training points and an underfit model."""
    S = as_points(S, name="S")
    if copy_count > len(S):
        raise ValueError(f"copy_count={copy_count} exceeds |S|={len(S)}")
    base = Halfmoons(0.1) if base is None else base
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(S), size=copy_count, replace=False)
    return CopierMixture(S[chosen], rho, copy_noise, underfit_noise, base)


class KDESampler(Distribution):
    """Convolution sampler of a kernel density estimate: a uniform training
    point plus ``sigma`` times a kernel draw."""

    KERNELS = ("gaussian", "uniform_ball")

    def __init__(self, S, sigma, kernel="gaussian"):
        S = as_points(S, name="S")
        if len(S) == 0:
            raise ValueError("KDE needs at least one training point")
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        if kernel not in self.KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}")
        self.S = S
        self.sigma = float(sigma)
        self.kernel = kernel
        self.dim = S.shape[1]

    def sample(self, n, rng):
        idx = rng.integers(len(self.S), size=n)
        if self.kernel == "gaussian":
            eta = rng.standard_normal((n, self.dim))
        else:
            eta = uniform_ball(n, self.dim, rng)
        return self.S[idx] + self.sigma * eta


def kde_sampler(S, sigma, kernel="gaussian"):
    return KDESampler(S, sigma, kernel)


class UniformCube(Distribution):
    def __init__(self, side, dim):
        if not side > 0 or dim < 1:
            raise ValueError("side must be positive and dim >= 1")
        self.side = float(side)
        self.dim = int(dim)

    def sample(self, n, rng):
        return self.side * rng.random((n, self.dim))


def kernel_median_radius(kernel, d):
    """Radius ``R`` with half the unit kernel's mass inside ``B(0, R)``."""
    if kernel == "uniform_ball":
        return 2.0 ** (-1.0 / d)
    if kernel == "gaussian":
        return float(stats.chi(d).median())
    raise ValueError(f"unknown kernel {kernel!r}")


def uniform_cube_kde_fixture(n, lam, gamma, sigma, d, kernel="uniform_ball", median_radius=None):
    """Cube ``[0, D]^d`` on which a size-``n`` KDE provably copies.

    Returns ``(UniformCube, D)`` with ``D = R sigma (max(2 n lam, 1/gamma) omega_d)^(1/d)``,
    where ``R`` is the kernel's median radius unless ``median_radius`` is given.
    """
    if n < 1 or not lam > 1 or not 0 < gamma < 1 or not sigma > 0 or d < 1:
        raise ValueError("invalid fixture parameters")
    R = kernel_median_radius(kernel, d) if median_radius is None else float(median_radius)
    if not R > 0:
        raise ValueError("median_radius must be positive")
    D = R * sigma * (max(2 * n * lam, 1.0 / gamma) * unit_ball_volume(d)) ** (1.0 / d)
    return UniformCube(D, d), D


def mc_ball_mass(dist, center, r, n_mc=10**6, rng=None):
    """Monte Carlo estimate of ``dist(B(center, r))`` and its standard error."""
    rng = np.random.default_rng(rng)
    pts = dist.sample(n_mc, rng)
    frac = float(np.mean(distances_to(pts, as_point(center, dim=dist.dim)) <= r))
    return frac, math.sqrt(max(frac * (1 - frac), 1e-300) / n_mc)


class PointAtoms(Distribution):
    """Finitely many atoms with given weights."""

    has_exact_mass = True

    def __init__(self, points, weights=None):
        self.points = as_points(points, name="points")
        n = len(self.points)
        if n == 0:
            raise ValueError("need at least one atom")
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)
        if w.shape != (n,) or np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-9):
            raise ValueError("weights must be nonnegative and sum to 1")
        self.weights = w
        self.dim = self.points.shape[1]

    def sample(self, n, rng):
        idx = rng.choice(len(self.points), size=n, p=self.weights)
        return self.points[idx].copy()

    def ball_mass(self, center, radii):
        d = distances_to(self.points, as_point(center, dim=self.dim))
        radii = np.atleast_1d(np.asarray(radii, dtype=np.float64))
        return np.array([self.weights[d <= r].sum() for r in radii])

    def union_mass(self, centers, radii):
        centers = as_points(centers, dim=self.dim)
        inside = np.zeros(len(self.points), dtype=bool)
        for c, r in zip(centers, radii):
            if r >= 0:
                inside |= distances_to(self.points, c) <= r
        return float(self.weights[inside].sum())

    def critical_radii(self, center):
        return distances_to(self.points, as_point(center, dim=self.dim))


def uniform_over(S):
    """The memorising model that outputs a uniformly chosen training point."""
    return PointAtoms(S)


# --- circle constructions -------------------------------------------------


@dataclass(frozen=True)
class IndexSubset:
    """``kappa`` of the circle indices ``1..2*kappa``."""

    kappa: int
    members: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(i) for i in self.members))
        if len(self.members) != self.kappa:
            raise ValueError(f"subset must have exactly kappa={self.kappa} members")
        if not all(1 <= i <= 2 * self.kappa for i in self.members):
            raise ValueError("members must lie in 1..2*kappa")

    def complement(self):
        return IndexSubset(self.kappa, frozenset(range(1, 2 * self.kappa + 1)) - self.members)

    @classmethod
    def random(cls, kappa, rng):
        chosen = rng.choice(np.arange(1, 2 * kappa + 1), size=kappa, replace=False)
        return cls(kappa, frozenset(chosen.tolist()))


def _circle_arrays(centers):
    centers = as_points(centers, name="centers")
    if centers.shape[1] < 2:
        raise ValueError("circles need an ambient dimension of at least 2")
    return centers


def _circle_geometry(centers, y):
    """In-plane offset ``a`` and out-of-plane offset ``h`` of ``y`` from each circle center."""
    diff = y[None, :] - centers
    a = np.hypot(diff[:, 0], diff[:, 1])
    h = np.sqrt(np.einsum("ij,ij->i", diff[:, 2:], diff[:, 2:]))
    return a, h, np.arctan2(diff[:, 1], diff[:, 0])


def arc_fraction(a, h, r):
    """Fraction of a unit circle within distance ``r`` of a point at in-plane
    offset ``a`` and out-of-plane offset ``h`` from its center."""
    a, h, r = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (a, h, r)))
    out = np.empty(a.shape)
    on_axis = a == 0
    out[on_axis] = (1.0 + h[on_axis] ** 2 <= r[on_axis] ** 2).astype(float)
    off = ~on_axis
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cos_t = (1.0 + a[off] ** 2 + h[off] ** 2 - r[off] ** 2) / (2.0 * a[off])
    out[off] = np.arccos(np.clip(cos_t, -1.0, 1.0)) / np.pi
    return out


class CircleMixture(Distribution):
    """Mixture of uniform distributions on unit circles lying in planes parallel
    to the first two coordinate axes."""

    has_exact_mass = True

    def __init__(self, centers, weights, p_epsilon_bounds=None):
        self.centers = _circle_arrays(centers)
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(self.centers),) or np.any(w < 0):
            raise ValueError("one nonnegative weight per circle required")
        if not math.isclose(w.sum(), 1.0, rel_tol=1e-9):
            raise ValueError(f"weights must sum to 1, got {w.sum()}")
        self.weights = w
        self.dim = self.centers.shape[1]
        self.p_epsilon_bounds = p_epsilon_bounds

    def sample(self, n, rng):
        which = rng.choice(len(self.centers), size=n, p=self.weights)
        theta = rng.uniform(0.0, TWO_PI, n)
        pts = self.centers[which].copy()
        pts[:, 0] += np.cos(theta)
        pts[:, 1] += np.sin(theta)
        return pts

    def circle_of(self, pts):
        """Index of the nearest circle for each point."""
        pts = as_points(pts, dim=self.dim)
        out = np.empty(len(pts), dtype=np.intp)
        for j, y in enumerate(pts):
            a, h, _ = _circle_geometry(self.centers, y)
            out[j] = int(np.argmin(np.hypot(a - 1.0, h)))
        return out

    def ball_mass(self, center, radii):
        y = as_point(center, dim=self.dim)
        radii = np.atleast_1d(np.asarray(radii, dtype=np.float64))
        a, h, _ = _circle_geometry(self.centers, y)
        live = self.weights > 0
        frac = arc_fraction(a[live][None, :], h[live][None, :], radii[:, None])
        return frac @ self.weights[live]

    def critical_radii(self, center):
        a, h, _ = _circle_geometry(self.centers, as_point(center, dim=self.dim))
        return np.concatenate([np.hypot(a - 1.0, h), np.hypot(a + 1.0, h)])

    def union_mass(self, centers, radii):
        """Exact mass of a union of closed balls: per circle, merge the covered arcs."""
        centers = as_points(centers, dim=self.dim)
        radii = np.asarray(radii, dtype=np.float64)
        total = 0.0
        for j in np.flatnonzero(self.weights > 0):
            intervals = []
            full = False
            for c, r in zip(centers, radii):
                if not r >= 0:
                    continue
                a, h, phi = _circle_geometry(self.centers[j : j + 1], c)
                a, h, phi = a[0], h[0], phi[0]
                if a == 0:
                    if 1.0 + h * h <= r * r:
                        full = True
                        break
                    continue
                cos_t = (1.0 + a * a + h * h - r * r) / (2.0 * a)
                if cos_t > 1.0:
                    continue
                half = math.acos(max(cos_t, -1.0))
                if half >= np.pi:
                    full = True
                    break
                intervals.append((phi - half, phi + half))
            covered = TWO_PI if full else _arc_union_length(intervals)
            total += self.weights[j] * covered / TWO_PI
        return float(total)


def _arc_union_length(intervals):
    pieces = []
    for lo, hi in intervals:
        width = hi - lo
        start = lo % TWO_PI
        end = start + width
        if end > TWO_PI:
            pieces.append((start, TWO_PI))
            pieces.append((0.0, end - TWO_PI))
        else:
            pieces.append((start, end))
    if not pieces:
        return 0.0
    pieces.sort()
    length = 0.0
    cur_lo, cur_hi = pieces[0]
    for lo, hi in pieces[1:]:
        if lo <= cur_hi:
            cur_hi = max(cur_hi, hi)
        else:
            length += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
    return min(length + cur_hi - cur_lo, TWO_PI)


@dataclass(frozen=True)
class CircleGeometry:
    """Centers of ``C_0, C_1, ..., C_2kappa`` (row 0 is the far circle ``C_0``)."""

    centers: np.ndarray

    def __post_init__(self):
        c = _circle_arrays(self.centers)
        object.__setattr__(self, "centers", c)
        if len(c) < 3 or len(c) % 2 == 0:
            raise ValueError("geometry needs 2*kappa + 1 circles")
        self.validate()

    @property
    def kappa(self):
        return (len(self.centers) - 1) // 2

    def validate(self):
        inner = self.centers[1:]
        gaps = []
        far = 0.0
        for i in range(len(inner)):
            for j in range(i + 1, len(inner)):
                sep = _circle_set_distance(inner[i], inner[j])
                gaps.append(sep)
                far = max(far, float(np.linalg.norm(inner[i] - inner[j])) + 2.0)
        if gaps and min(gaps) < 3.0:
            raise ValueError("circles C_1..C_2kappa must be at distance >= 3 from each other")
        for c in inner:
            if _circle_set_distance(self.centers[0], c) < 2.0 + far:
                raise ValueError("C_0 must be at distance >= 2 + max_ij ||C_i - C_j|| from every C_i")

    @classmethod
    def default(cls, kappa, dim=2, spacing=5.0):
        """Coplanar layout: ``C_i`` centered at ``(spacing*(i-1), 0)``; ``C_0`` beyond the far end."""
        if kappa < 1:
            raise ValueError("kappa must be >= 1")
        span = spacing * (2 * kappa - 1)
        centers = np.zeros((2 * kappa + 1, dim))
        centers[1:, 0] = spacing * np.arange(2 * kappa)
        # set distance to the last circle = gap - 2 must exceed 2 + (span + 2)
        centers[0, 0] = span + (span + 6.0) + 1.0
        return cls(centers)


def _circle_set_distance(c1, c2):
    """Distance between two coplanar-or-parallel unit circles (exact when coplanar)."""
    a = float(np.hypot(*(c1[:2] - c2[:2])))
    h = float(np.linalg.norm(c1[2:] - c2[2:]))
    if h == 0:
        return max(a - 2.0, 0.0) if a >= 2.0 else 0.0
    # parallel planes: sample the first circle densely (fixture-grade accuracy)
    t = np.linspace(0, TWO_PI, 2048, endpoint=False)
    pts = np.zeros((len(t), len(c1)))
    pts[:] = c1
    pts[:, 0] += np.cos(t)
    pts[:, 1] += np.sin(t)
    best = math.inf
    for y in pts:
        aa, hh, _ = _circle_geometry(c2[None, :], y)
        best = min(best, float(np.hypot(aa[0] - 1.0, hh[0])))
    return best


def circles_family(kappa, subset, geometry=None):
    """Circle distribution with mass ``1/(3 kappa)`` on member circles and
    ``2/(3 kappa)`` on the others (``C_0`` gets none)."""
    geometry = geometry or CircleGeometry.default(kappa)
    if geometry.kappa != kappa or subset.kappa != kappa:
        raise ValueError("kappa mismatch between subset and geometry")
    w = np.zeros(2 * kappa + 1)
    for i in range(1, 2 * kappa + 1):
        w[i] = 1.0 / (3 * kappa) if i in subset.members else 2.0 / (3 * kappa)
    return CircleMixture(geometry.centers, w, p_epsilon_bounds=(1.0 / (9 * kappa), 2.0 / (3 * kappa)))


def unit_circle(dim=2):
    return CircleMixture(np.zeros((1, dim)), [1.0])


def _occupancy(S, geometry):
    S = as_points(S, dim=geometry.centers.shape[1], name="S")
    counts = np.zeros(len(geometry.centers), dtype=np.int64)
    if len(S):
        probe = CircleMixture(geometry.centers, np.full(len(geometry.centers), 1.0 / len(geometry.centers)))
        np.add.at(counts, probe.circle_of(S), 1)
    return counts


def singly_occupied(S, subset, geometry):
    """``(L, L')``: circles in / outside the subset holding exactly one point of ``S``."""
    counts = _occupancy(S, geometry)
    all_idx = range(1, 2 * subset.kappa + 1)
    L = sorted(i for i in all_idx if i in subset.members and counts[i] == 1)
    Lp = sorted(i for i in all_idx if i not in subset.members and counts[i] == 1)
    return L, Lp


def covers(S, subset, geometry):
    """True iff at least ``kappa/8`` circles on each side of the subset hold exactly one point."""
    L, Lp = singly_occupied(S, subset, geometry)
    need = subset.kappa / 8
    return len(L) >= need and len(Lp) >= need


def generative_A(S, subset, lam=13.0, epsilon=1.0 / 3.0, geometry=None, prime=False, seed=None):
    """Generated distribution of the lower-bound construction.

    With ``prime=True`` the complement subset is used. Non-covering samples
    yield the uniform distribution on ``C_0``.
    """
    if subset.kappa % 8:
        raise ValueError("kappa must be divisible by 8")
    geometry = geometry or CircleGeometry.default(subset.kappa)
    if prime:
        subset = subset.complement()
    kappa = subset.kappa
    w = np.zeros(2 * kappa + 1)
    if not covers(S, subset, geometry):
        w[0] = 1.0
        return CircleMixture(geometry.centers, w)
    L, _ = singly_occupied(S, subset, geometry)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(np.asarray(L), size=kappa // 8, replace=False)
    w[chosen] = lam * (1 + epsilon) / (3 * kappa)
    w[0] = 1.0 - lam * (1 + epsilon) / 24
    if w[0] < 0:
        raise ValueError("lam*(1+epsilon) must not exceed 24")
    return CircleMixture(geometry.centers, w)


def exact_cr_oracle(q, p, S, lam, gamma, radius_grid_density=2000, rtol=1e-9, n_mc=10**6, seed=0):
    """Ground-truth copy rate from exact ball masses.

    For each training point the largest radius (over a uniform grid plus the
    structural radii where masses change regime) with ``q(B) >= lam p(B)`` and
    ``p(B) <= gamma`` is found; the q-mass of the union of those balls is
    returned. Ties are accepted within relative tolerance ``rtol``.
    Converges from below as the grid densifies.
    """
    if not (q.has_exact_mass and p.has_exact_mass):
        raise NotImplementedError("exact_cr_oracle needs exact ball masses for both p and q")
    S = as_points(S, dim=p.dim, name="S")
    radii = np.full(len(S), np.nan)
    for i, x in enumerate(S):
        crit = np.concatenate([q.critical_radii(x), p.critical_radii(x)])
        r_max = float(crit.max()) + 1.0 if crit.size else 1.0
        cand = np.unique(np.concatenate([
            np.linspace(0.0, r_max, radius_grid_density),
            crit,
            crit * (1 - 1e-12),
        ]))
        cand = cand[cand >= 0]
        pm = p.ball_mass(x, cand)
        qm = q.ball_mass(x, cand)
        ok = (pm <= gamma * (1 + rtol)) & (qm >= lam * pm * (1 - rtol))
        if ok.any():
            radii[i] = cand[ok].max()
    try:
        return q.union_mass(S, radii)
    except NotImplementedError:
        rng = np.random.default_rng(seed)
        pts = q.sample(n_mc, rng)
        inside = np.zeros(n_mc, dtype=bool)
        for x, r in zip(S, radii):
            if r >= 0:
                inside |= distances_to(pts, x) <= r
        return float(inside.mean())
