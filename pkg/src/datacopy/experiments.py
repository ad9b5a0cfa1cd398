"""Experiment recipes: halfmoons significance table, KDE copier, circle lower bound."""

from __future__ import annotations

import io
import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .baseline import P_THRESHOLD, BaselineParams, baseline_test
from .calibration import decide, null_calibrate, p_value
from .detector import DataCopyDetector, DetectionParams
from .distributions import (
    CircleGeometry,
    Halfmoons,
    IndexSubset,
    KDESampler,
    circles_family,
    covers,
    exact_cr_oracle,
    generative_A,
    make_copier_mixture,
    uniform_cube_kde_fixture,
)

RHOS = (0.0, 0.1, 0.2, 0.3, 0.4)
CLUSTER_COUNTS = (1, 5, 10, 20)


def _child_seeds(seed, count):
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


@dataclass
class HalfmoonsConfig:
    n: int = 2000
    sigma: float = 0.1
    rhos: tuple = RHOS
    cluster_counts: tuple = CLUSTER_COUNTS
    repetitions: int = 10
    calibration_runs: int = 1000
    detection: DetectionParams = field(default_factory=lambda: DetectionParams(k=2))
    alpha: float = 0.05
    baseline_alpha: float = P_THRESHOLD
    strict: bool = True
    copy_count: int = 20
    copy_noise: float = 0.02
    underfit_noise: float = 0.25
    seed: int = 0
    reduced_precision: bool = False


@dataclass
class TableRow:
    method: str
    p_values: list
    decisions: list


@dataclass
class HalfmoonsResult:
    config: HalfmoonsConfig
    rows: list
    raw: dict
    null_values: list

    def row(self, method):
        return next(r for r in self.rows if r.method == method)

    def to_dict(self):
        cfg = asdict(self.config)
        return {
            "config": cfg,
            "reduced_precision": self.config.reduced_precision,
            "rows": [asdict(r) for r in self.rows],
            "raw": self.raw,
            "null_values": self.null_values,
        }


def _rho_label(rho):
    return "q=p" if rho == 0 else f"rho={rho:g}"


def run_halfmoons(config=None, cache=None, progress=None):
    """Median p-values and decisions for the detector and the clustered baseline.

    One null distribution (``calibration_runs`` fresh training sets with
    ``q = p``) is shared by every repetition. Each repetition draws a training
    set, a held-out set of the same size and, for every ``rho``, a copier
    mixture built on that training set.
    """
    cfg = config or HalfmoonsConfig()
    p = Halfmoons(cfg.sigma)
    null_seed, *rep_seeds = _child_seeds(cfg.seed, cfg.repetitions + 1)
    null = null_calibrate(p, cfg.n, cfg.detection, runs=cfg.calibration_runs, seed=null_seed, cache=cache)
    methods = ["ours"] + [f"c={c}" for c in cfg.cluster_counts]
    raw = {m: {_rho_label(r): [] for r in cfg.rhos} for m in methods}
    raw["cr_hat"] = {_rho_label(r): [] for r in cfg.rhos}
    for rep, rep_seed in enumerate(rep_seeds):
        rng = np.random.default_rng(rep_seed)
        S = p.sample(cfg.n, rng)
        P = p.sample(cfg.n, rng)
        det_seed = int(rng.integers(2**63))
        det = DataCopyDetector(
            **{k: v for k, v in asdict(cfg.detection).items() if k != "seed"},
            random_state=det_seed,
        ).fit(S)
        for rho in cfg.rhos:
            label = _rho_label(rho)
            if rho == 0:
                q = p
            else:
                q = make_copier_mixture(S, rho, cfg.copy_count, cfg.copy_noise, cfg.underfit_noise,
                                        base=p, seed=int(rng.integers(2**63)))
            try:
                rep_report = det.detect(q)
            except Exception as exc:
                raise RuntimeError(f"detector failed at repetition {rep}, {label}: {exc}") from exc
            raw["cr_hat"][label].append(rep_report.cr_hat)
            raw["ours"][label].append(p_value(null, rep_report.cr_hat, strict=cfg.strict))
            Q = q.sample(cfg.n, rng)
            for c in cfg.cluster_counts:
                rep_base = baseline_test(S, P, Q, BaselineParams(c=c, seed=rep_seed))
                raw[f"c={c}"][label].append(rep_base.p_value)
        if progress:
            progress(rep + 1, cfg.repetitions)
    rows = []
    for m in methods:
        alpha = cfg.alpha if m == "ours" else cfg.baseline_alpha
        meds = [float(np.median(raw[m][_rho_label(r)])) for r in cfg.rhos]
        rows.append(TableRow(m, meds, [decide(v, alpha).significant for v in meds]))
    return HalfmoonsResult(cfg, rows, raw, list(null.values))


def halfmoons_tables(result):
    """``(csv_text, aligned_text)`` laid out as method rows by rho columns."""
    labels = [_rho_label(r) for r in result.config.rhos]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "column", "median_p", "significant", "reduced_precision"])
    for row in result.rows:
        for lab, pv, dec in zip(labels, row.p_values, row.decisions):
            w.writerow([row.method, lab, f"{pv:.4f}", "yes" if dec else "no",
                        int(result.config.reduced_precision)])
    width = max(10, *(len(lab) + 2 for lab in labels))
    head = "method".ljust(8) + "".join(lab.rjust(width) for lab in labels)
    lines = [head, "-" * len(head)]
    for row in result.rows:
        cells = [f"{pv:.3f} {'yes' if d else 'no'}" for pv, d in zip(row.p_values, row.decisions)]
        lines.append(row.method.ljust(8) + "".join(c.rjust(width) for c in cells))
    if result.config.reduced_precision:
        lines.append("(reduced-precision run)")
    return buf.getvalue(), "\n".join(lines) + "\n"


def quick_halfmoons_config(seed=0):
    """Cheap variant for smoke tests; results are flagged as reduced precision."""
    return HalfmoonsConfig(
        n=500, repetitions=3, calibration_runs=20,
        detection=DetectionParams(k=2, m=20000, b=100, gamma=0.001, seed=0),
        seed=seed, reduced_precision=True,
    )


# --- KDE copier -----------------------------------------------------------


@dataclass
class KDEConfig:
    n: int = 100
    d: int = 2
    lam: float = 5.0
    gamma: float = 0.01
    sigma: float = 0.05
    kernel: str = "uniform_ball"
    epsilon: float = 0.1
    m: int = 200_000
    b: int = 25
    k: int = 2
    seeds: tuple = tuple(range(10))


def run_kde(config=None):
    """Copy-rate estimates for a KDE fitted to a uniform cube sample, one per seed."""
    cfg = config or KDEConfig()
    cube, D = uniform_cube_kde_fixture(cfg.n, cfg.lam, cfg.gamma, cfg.sigma, cfg.d, cfg.kernel)
    out = []
    for seed in cfg.seeds:
        rng = np.random.default_rng(seed)
        S = cube.sample(cfg.n, rng)
        q = KDESampler(S, cfg.sigma, cfg.kernel)
        det = DataCopyDetector(lam=cfg.lam, gamma=cfg.gamma, epsilon=cfg.epsilon, m=cfg.m,
                               b=cfg.b, k=cfg.k, random_state=int(rng.integers(2**63)))
        rep = det.fit(S).detect(q)
        out.append({"seed": seed, "cr_hat": rep.cr_hat, "n_active": rep.n_active})
    return {"side": D, "runs": out}


# --- circle lower bound ---------------------------------------------------


@dataclass
class LowerBoundConfig:
    kappa: int = 64
    lam: float = 13.0
    epsilon: float = 1.0 / 3.0
    gamma: float = 0.05
    seeds: tuple = tuple(range(100))


def run_lowerbound(config=None):
    """Covering frequency and exact copy rates of the two generated distributions.

    For each seed a random index subset and a training sample of size
    ``kappa`` are drawn; on covering samples the tight rate of ``A_T`` and
    the loose rate of ``A_T'`` are computed exactly.
    """
    cfg = config or LowerBoundConfig()
    geom = CircleGeometry.default(cfg.kappa)
    lam, eps, gamma = cfg.lam, cfg.epsilon, cfg.gamma
    out = []
    for seed in cfg.seeds:
        rng = np.random.default_rng(seed)
        subset = IndexSubset.random(cfg.kappa, rng)
        p = circles_family(cfg.kappa, subset, geom)
        S = p.sample(cfg.kappa, rng)
        row = {"seed": seed, "covers": bool(covers(S, subset, geom))}
        if row["covers"]:
            a_seed = int(rng.integers(2**63))
            q = generative_A(S, subset, lam, eps, geom, seed=a_seed)
            q_prime = generative_A(S, subset, lam, eps, geom, prime=True, seed=a_seed)
            row["cr_tight"] = exact_cr_oracle(q, p, S, lam * (1 + eps), gamma / (1 + eps))
            row["cr_loose_prime"] = exact_cr_oracle(q_prime, p, S, lam / (1 + eps), gamma * (1 + eps))
        out.append(row)
    return {
        "expected_tight": lam * (1 + eps) / 24,
        "ratio_prime": lam * (1 + eps) / 2,
        "lam_loose": lam / (1 + eps),
        "runs": out,
    }

