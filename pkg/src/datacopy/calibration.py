"""Null calibration of copy-rate estimates and significance decisions."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .detector import DetectionParams, detect


@dataclass(frozen=True)
class NullDistribution:
    values: tuple
    run_count: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != self.run_count:
            raise ValueError("run_count must equal the number of values")
        if any(not 0 <= v <= 1 for v in self.values):
            raise ValueError("null values must lie in [0, 1]")


@dataclass(frozen=True)
class SignificanceDecision:
    p_value: float
    alpha: float
    significant: bool


def run_seeds(seed, runs):
    """Independent per-run seeds derived from a master seed."""
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(runs)]


def _one_null_run(p, n, params, run_seed, k_b):
    rng = np.random.default_rng(run_seed)
    S = p.sample(n, rng)
    run_params = DetectionParams(**{**asdict(params), "seed": int(rng.integers(2**63))})
    return detect(S, p, run_params, k_b=k_b).cr_hat


def null_calibrate(p, n, params, runs=1000, seed=0, n_jobs=1, k_b=None, cache=None):
    """Distribution of the copy-rate estimate when the model is ``p`` itself.

    Each run draws a fresh training set of size ``n`` from ``p`` and runs the
    detector with ``q = p``. Runs are independent and ordered by run index, so
    the result does not depend on ``n_jobs``.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if cache is not None:
        hit = cache.load(p, n, params, runs, seed)
        if hit is not None:
            return hit
    seeds = run_seeds(seed, runs)
    values = []
    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_one_null_run, p, n, params, s, k_b) for s in seeds]
            for i, fut in enumerate(futures):
                try:
                    values.append(fut.result())
                except Exception as exc:
                    raise RuntimeError(f"null calibration run {i} failed: {exc}") from exc
    else:
        for i, s in enumerate(seeds):
            try:
                values.append(_one_null_run(p, n, params, s, k_b))
            except Exception as exc:
                raise RuntimeError(f"null calibration run {i} failed: {exc}") from exc
    null = NullDistribution(tuple(values), runs, int(seed))
    if cache is not None:
        cache.store(p, n, params, null)
    return null


def p_value(null, observed, strict=True):
    """Fraction of null values exceeding ``observed``.

    ``strict=True`` counts ``v > observed``; ``strict=False`` counts
    ``v >= observed``, which keeps the test valid when ties are common.
    Small values indicate copying.
    """
    vals = np.asarray(null.values if isinstance(null, NullDistribution) else null, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("null distribution is empty")
    hits = vals > observed if strict else vals >= observed
    return float(np.count_nonzero(hits) / vals.size)


def decide(p, alpha=0.05):
    if not 0 <= p <= 1:
        raise ValueError(f"p-value must lie in [0, 1], got {p}")
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return SignificanceDecision(float(p), float(alpha), bool(p <= alpha))


def decide_median(p_values, alpha=0.05):
    """Decision on the median of repeated p-values."""
    return decide(float(np.median(p_values)), alpha)


class NullCache:
    """CSV cache of null distributions keyed by (distribution, n, params, runs, seed)."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def key(self, p, n, params, runs, seed):
        blob = json.dumps(
            {"dist": p.cache_key(), "n": n, "params": asdict(params), "runs": runs, "seed": seed},
            sort_keys=True, default=str,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:24]

    def path(self, p, n, params, runs, seed):
        return self.directory / f"null-{self.key(p, n, params, runs, seed)}.csv"

    def load(self, p, n, params, runs, seed):
        path = self.path(p, n, params, runs, seed)
        if not path.exists():
            return None
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        return NullDistribution(tuple(float(r[1]) for r in rows), runs, seed)

    def store(self, p, n, params, null):
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path(p, n, params, null.run_count, null.seed)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", newline="") as fh:
            fh.write(f"# {p.cache_key()} n={n} seed={null.seed}\n")
            w = csv.writer(fh)
            for i, v in enumerate(null.values):
                w.writerow([i, repr(v)])
        os.replace(tmp, path)
