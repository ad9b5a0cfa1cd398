"""Command-line front end.

Exit codes: 0 success, 1 unexpected failure, 2 malformed or unreadable input
file, 3 sampler protocol failure, 4 invalid parameters.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import P_THRESHOLD, BaselineParams, baseline_test
from .calibration import NullCache, decide, null_calibrate, p_value
from .detector import DataCopyDetector, DetectionParams, SamplerFailure
from .distributions import (
    Halfmoons,
    KDESampler,
    UniformCube,
    make_copier_mixture,
    sample_halfmoons,
    unit_circle,
)
from .experiments import (
    HalfmoonsConfig,
    KDEConfig,
    LowerBoundConfig,
    halfmoons_tables,
    quick_halfmoons_config,
    run_halfmoons,
    run_kde,
    run_lowerbound,
)
from .fileio import InputFormatError, ReportDocument, file_digest, read_points, write_points
from .mass import EstimatorConfig, estimate_k
from .samplers import ArraySampler, ExternalSampler, SamplerError

EXIT_INPUT, EXIT_SAMPLER, EXIT_PARAMS = 2, 3, 4

DETECT_DEFAULTS = {
    "lam": 20.0, "gamma": 0.00025, "epsilon": 0.1, "delta": 0.05, "m": 200_000,
    "u_size": None, "b": 400, "k": "auto", "k_epsilon": 1.0, "k_b": None, "seed": 0,
}
SAMPLER_DEFAULTS = {"sampler": None, "samples": None, "sampler_cmd": None,
                    "sampler_timeout": 60.0, "rho": 0.4, "sigma": 0.1, "kde_sigma": 0.05}
COMMAND_DEFAULTS = {
    "detect": {**DETECT_DEFAULTS, **SAMPLER_DEFAULTS, "train": None},
    "baseline": {"train": None, "test": None, "generated": None, "clusters": 1,
                 "max_iters": 300, "distance_scope": "cluster", "alpha": P_THRESHOLD, "seed": 0},
    "calibrate": {**DETECT_DEFAULTS, "k": 2, "distribution": "halfmoons", "sigma": 0.1,
                  "n": 2000, "runs": 1000, "observed": None, "strict": True,
                  "alpha": 0.05, "cache_dir": None},
    "estimate-k": {"train": None, "epsilon": 1.0, "delta": 0.05, "b": None, "seed": None},
    "experiment-halfmoons": {"runs": 1000, "repetitions": 10, "quick": False,
                             "alpha": 0.05, "baseline_alpha": P_THRESHOLD, "strict": True,
                             "seed": 0, "cache_dir": None, "csv": None, "table": None},
    "experiment-kde": {"seeds": 10, "b": 25, "m": 200_000},
    "experiment-lowerbound": {"seeds": 100, "gamma": 0.05},
    "sample": {"distribution": "halfmoons", "n": 2000, "sigma": 0.1, "seed": 0, "out": None},
}


class ParameterError(ValueError):
    pass


def _add_detect_flags(sp, k_default_doc="auto"):
    g = sp.add_argument_group("detector")
    g.add_argument("--lam", type=float, help="over-representation factor (default 20)")
    g.add_argument("--gamma", type=float, help="largest training mass of a region (default 1/4000)")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--m", type=int, help="generated points used to find regions")
    g.add_argument("--u-size", type=int, help="generated points used to measure the union")
    g.add_argument("--b", type=int, help="training points in the reference ball")
    g.add_argument("--k", help=f"regularity exponent or 'auto' (default {k_default_doc})")


def build_parser():
    parser = argparse.ArgumentParser(prog="datacopy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"datacopy {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of parameters (flags take precedence)")
        sp.add_argument("--output", "-o", help="write the JSON report here")
        sp.add_argument("--threads", type=int, help="worker threads (default $DATACOPY_THREADS or 1)")
        return sp

    sp = common(sub.add_parser("detect", help="estimate the copy rate of a model"))
    sp.add_argument("--train", help="training points (CSV)")
    src = sp.add_argument_group("sampler (choose one)")
    src.add_argument("--sampler", choices=["halfmoons", "copier", "kde"], help="built-in model")
    src.add_argument("--samples", help="CSV of pre-drawn generated points")
    src.add_argument("--sampler-cmd", help="command speaking the SAMPLE line protocol")
    src.add_argument("--sampler-timeout", type=float)
    src.add_argument("--rho", type=float, help="copy fraction of the 'copier' model")
    src.add_argument("--sigma", type=float, help="noise level of the halfmoons models")
    src.add_argument("--kde-sigma", type=float, help="bandwidth of the 'kde' model")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--k-epsilon", type=float)
    sp.add_argument("--k-b", type=int)
    _add_detect_flags(sp)

    sp = common(sub.add_parser("baseline", help="clustered three-sample test"))
    sp.add_argument("--train")
    sp.add_argument("--test", help="held-out points (CSV)")
    sp.add_argument("--generated", help="generated points (CSV)")
    sp.add_argument("--clusters", type=int)
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--distance-scope", choices=["cluster", "global"])
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--seed", type=int)

    sp = common(sub.add_parser("calibrate", help="null distribution of the copy rate"))
    sp.add_argument("--distribution", choices=["halfmoons"])
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--runs", type=int)
    sp.add_argument("--observed", type=float, help="copy rate to convert to a p-value")
    sp.add_argument("--non-strict", dest="strict", action="store_const", const=False,
                    help="count ties as exceeding the observed value")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--cache-dir")
    sp.add_argument("--seed", type=int)
    _add_detect_flags(sp, k_default_doc="2")

    sp = common(sub.add_parser("estimate-k", help="estimate the regularity exponent"))
    sp.add_argument("--train")
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--b", type=int)
    sp.add_argument("--seed", type=int, help="random anchor point (default: first point)")

    sp = common(sub.add_parser("experiment-halfmoons", help="significance table over halfmoons"))
    sp.add_argument("--runs", type=int, help="calibration runs")
    sp.add_argument("--repetitions", type=int)
    sp.add_argument("--quick", action="store_const", const=True, help="small reduced-precision run")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--baseline-alpha", type=float)
    sp.add_argument("--non-strict", dest="strict", action="store_const", const=False)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--cache-dir")
    sp.add_argument("--csv", help="write the table as CSV here")
    sp.add_argument("--table", help="write the aligned text table here")

    sp = common(sub.add_parser("experiment-kde", help="KDE copier on a uniform cube"))
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--b", type=int)
    sp.add_argument("--m", type=int)

    sp = common(sub.add_parser("experiment-lowerbound", help="circle lower-bound construction"))
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--gamma", type=float)

    sp = common(sub.add_parser("sample", help="write synthetic points to CSV"))
    sp.add_argument("--distribution", choices=["halfmoons", "circle", "square"])
    sp.add_argument("--n", type=int)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="CSV path (default: stdout)")
    return parser


def resolve_config(command, args):
    """Merge built-in defaults, the config file and explicit flags, in that order."""
    cfg = dict(COMMAND_DEFAULTS[command])
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise InputFormatError(f"{args.config}: cannot read config: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"{args.config}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(loaded, dict):
            raise ParameterError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise ParameterError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg.get("k") not in (None, "auto"):
        try:
            cfg["k"] = int(cfg["k"])
        except (TypeError, ValueError):
            raise ParameterError(f"k must be a positive integer or 'auto', got {cfg['k']!r}") from None
    return cfg


def resolve_threads(args):
    if args.threads is not None:
        threads = args.threads
    else:
        env = os.environ.get("DATACOPY_THREADS", "1")
        try:
            threads = int(env)
        except ValueError:
            raise ParameterError(f"DATACOPY_THREADS must be an integer, got {env!r}") from None
    if threads < 1:
        raise ParameterError("thread count must be >= 1")
    return threads


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ParameterError(f"missing required parameter(s): {', '.join(missing)}")


def _detection_params(cfg):
    return DetectionParams(**{k: cfg[k] for k in DetectionParams.__dataclass_fields__ if k in cfg})


def _make_sampler(cfg, S, stack):
    chosen = [k for k in ("sampler", "samples", "sampler_cmd") if cfg.get(k)]
    if len(chosen) != 1:
        raise ParameterError("specify exactly one of --sampler, --samples, --sampler-cmd")
    d = S.shape[1]
    if cfg["samples"]:
        return ArraySampler(read_points(cfg["samples"], dim=d))
    if cfg["sampler_cmd"]:
        s = ExternalSampler(cfg["sampler_cmd"], d, timeout=cfg["sampler_timeout"])
        stack.append(s)
        return s
    name = cfg["sampler"]
    if name == "kde":
        return KDESampler(S, cfg["kde_sigma"], "gaussian")
    if d != 2:
        raise ParameterError(f"built-in sampler {name!r} is two-dimensional; training data has d={d}")
    base = Halfmoons(cfg["sigma"])
    if name == "halfmoons":
        return base
    return make_copier_mixture(S, rho=cfg["rho"], base=base, seed=cfg["seed"])


def cmd_detect(cfg, threads):
    _require(cfg, "train")
    params = _detection_params(cfg)
    S = read_points(cfg["train"])
    stack = []
    t0 = time.perf_counter()
    try:
        sampler = _make_sampler(cfg, S, stack)
        det = DataCopyDetector(
            lam=params.lam, gamma=params.gamma, epsilon=params.epsilon, delta=params.delta,
            m=params.m, u_size=params.u_size, b=params.b, k=params.k,
            k_epsilon=cfg["k_epsilon"], k_b=cfg["k_b"], random_state=params.seed, n_jobs=threads,
        ).fit(S)
        report = det.detect(sampler)
    finally:
        for s in stack:
            s.close()
    results = report.to_dict()
    results.pop("elapsed")
    inputs = {"train": {"path": str(cfg["train"]), "sha256": file_digest(cfg["train"]), "n": len(S)}}
    if cfg["samples"]:
        inputs["samples"] = {"path": str(cfg["samples"]), "sha256": file_digest(cfg["samples"])}
    doc = ReportDocument("detect", cfg, params.seed, inputs, results,
                         {"seconds": time.perf_counter() - t0})
    summary = f"cr_hat={report.cr_hat:.6f} regions={report.n_active}/{len(S)} k={report.k}"
    return doc, summary


def cmd_baseline(cfg, threads):
    _require(cfg, "train", "test", "generated")
    params = BaselineParams(cfg["clusters"], cfg["max_iters"], cfg["seed"], cfg["distance_scope"])
    S = read_points(cfg["train"])
    P = read_points(cfg["test"], dim=S.shape[1])
    Q = read_points(cfg["generated"], dim=S.shape[1])
    t0 = time.perf_counter()
    rep = baseline_test(S, P, Q, params)
    dec = decide(rep.p_value, cfg["alpha"])
    results = {**rep.to_dict(), "significant": dec.significant}
    inputs = {k: {"path": str(cfg[k]), "sha256": file_digest(cfg[k])} for k in ("train", "test", "generated")}
    doc = ReportDocument("baseline", cfg, cfg["seed"], inputs, results,
                         {"seconds": time.perf_counter() - t0})
    return doc, f"min_z={rep.min_z:.4f} p={rep.p_value:.4g} significant={'yes' if dec.significant else 'no'}"


def cmd_calibrate(cfg, threads):
    params = _detection_params(cfg)
    if cfg["n"] < 1 or cfg["runs"] < 1:
        raise ParameterError("n and runs must be >= 1")
    p = Halfmoons(cfg["sigma"])
    cache = NullCache(cfg["cache_dir"]) if cfg["cache_dir"] else None
    t0 = time.perf_counter()
    null = null_calibrate(p, cfg["n"], params, runs=cfg["runs"], seed=params.seed,
                          n_jobs=threads, k_b=cfg["k_b"], cache=cache)
    results = {"null_values": list(null.values), "run_count": null.run_count}
    summary = f"runs={null.run_count} null_mean={np.mean(null.values):.6f}"
    if cfg["observed"] is not None:
        pv = p_value(null, cfg["observed"], strict=cfg["strict"])
        dec = decide(pv, cfg["alpha"])
        results.update(p_value=pv, significant=dec.significant)
        summary += f" p={pv:.4f} significant={'yes' if dec.significant else 'no'}"
    doc = ReportDocument("calibrate", cfg, params.seed, {}, results, {"seconds": time.perf_counter() - t0})
    return doc, summary


def cmd_estimate_k(cfg, threads):
    _require(cfg, "train")
    S = read_points(cfg["train"])
    conf = EstimatorConfig(epsilon=cfg["epsilon"], delta=cfg["delta"], b_override=cfg["b"])
    t0 = time.perf_counter()
    k = estimate_k(S, conf, rng_seed=cfg["seed"])
    inputs = {"train": {"path": str(cfg["train"]), "sha256": file_digest(cfg["train"]), "n": len(S)}}
    doc = ReportDocument("estimate-k", cfg, cfg["seed"], inputs, {"k": k}, {"seconds": time.perf_counter() - t0})
    return doc, f"k={k}"


def cmd_experiment_halfmoons(cfg, threads):
    if cfg["quick"]:
        conf = quick_halfmoons_config(seed=cfg["seed"])
    else:
        conf = HalfmoonsConfig(calibration_runs=cfg["runs"], repetitions=cfg["repetitions"], seed=cfg["seed"])
    conf.alpha, conf.baseline_alpha, conf.strict = cfg["alpha"], cfg["baseline_alpha"], cfg["strict"]
    for key in ("alpha", "baseline_alpha"):
        if not 0 <= cfg[key] <= 1:
            raise ParameterError(f"{key} must lie in [0, 1]")
    cache = NullCache(cfg["cache_dir"]) if cfg["cache_dir"] else None
    t0 = time.perf_counter()
    result = run_halfmoons(conf, cache=cache)
    csv_text, table = halfmoons_tables(result)
    if cfg["csv"]:
        Path(cfg["csv"]).write_text(csv_text)
    if cfg["table"]:
        Path(cfg["table"]).write_text(table)
    sys.stdout.write(table)
    doc = ReportDocument("experiment-halfmoons", cfg, cfg["seed"], {}, result.to_dict(),
                         {"seconds": time.perf_counter() - t0})
    ours = result.row("ours")
    summary = "ours: " + " ".join("yes" if d else "no" for d in ours.decisions)
    return doc, summary


def cmd_experiment_kde(cfg, threads):
    if cfg["seeds"] < 1:
        raise ParameterError("seeds must be >= 1")
    conf = KDEConfig(b=cfg["b"], m=cfg["m"], seeds=tuple(range(cfg["seeds"])))
    t0 = time.perf_counter()
    res = run_kde(conf)
    hits = sum(r["cr_hat"] >= 0.35 for r in res["runs"])
    doc = ReportDocument("experiment-kde", cfg, 0, {}, {**res, "config": asdict(conf)},
                         {"seconds": time.perf_counter() - t0})
    return doc, f"side={res['side']:.4f} runs_with_cr_hat>=0.35: {hits}/{len(res['runs'])}"


def cmd_experiment_lowerbound(cfg, threads):
    if cfg["seeds"] < 1:
        raise ParameterError("seeds must be >= 1")
    conf = LowerBoundConfig(gamma=cfg["gamma"], seeds=tuple(range(cfg["seeds"])))
    t0 = time.perf_counter()
    res = run_lowerbound(conf)
    cov = [r for r in res["runs"] if r["covers"]]
    doc = ReportDocument("experiment-lowerbound", cfg, 0, {}, res, {"seconds": time.perf_counter() - t0})
    summary = f"covering={len(cov)}/{len(res['runs'])}"
    if cov:
        summary += f" tight_rate={cov[0]['cr_tight']:.6f} loose_prime_rate={max(r['cr_loose_prime'] for r in cov):.6f}"
    return doc, summary


def cmd_sample(cfg, threads):
    if cfg["n"] < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(cfg["seed"])
    if cfg["distribution"] == "halfmoons":
        X = sample_halfmoons(cfg["n"], cfg["sigma"], seed=cfg["seed"])
    elif cfg["distribution"] == "circle":
        X = unit_circle().sample(cfg["n"], rng)
    else:
        X = UniformCube(1.0, 2).sample(cfg["n"], rng)
    if cfg["out"]:
        write_points(cfg["out"], X, header=f"{cfg['distribution']} n={cfg['n']} seed={cfg['seed']}")
    else:
        sys.stdout.write("\n".join(",".join(f"{v:.17g}" for v in row) for row in X) + "\n")
    return None, f"wrote {len(X)} points" if cfg["out"] else None


COMMANDS = {
    "detect": cmd_detect,
    "baseline": cmd_baseline,
    "calibrate": cmd_calibrate,
    "estimate-k": cmd_estimate_k,
    "experiment-halfmoons": cmd_experiment_halfmoons,
    "experiment-kde": cmd_experiment_kde,
    "experiment-lowerbound": cmd_experiment_lowerbound,
    "sample": cmd_sample,
}


def _is_sampler_failure(exc):
    while exc is not None:
        if isinstance(exc, SamplerError):
            return True
        exc = exc.__cause__
    return False


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = resolve_threads(args)
        cfg = resolve_config(args.command, args)
        doc, summary = COMMANDS[args.command](cfg, threads)
    except InputFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SamplerError, SamplerFailure) as exc:
        if _is_sampler_failure(exc):
            print(f"sampler error: {exc}", file=sys.stderr)
            return EXIT_SAMPLER
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if doc is not None and args.output:
        doc.write(args.output)
    if summary:
        print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
