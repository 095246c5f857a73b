"""Experiment runner: ``rdsmc run|validate|report``.

Configs are YAML files with the blocks ``target``, ``sampler``, ``schedule`` and
the keys ``seeds``, ``N``, ``metrics``, ``output_dir``, ``dump_samples``,
``dump_ess``. Only ``RDSMC_OUTPUT_DIR`` and ``RDSMC_WORKERS`` may override
settings from the environment.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .baselines import AnnealConfig, run_ais_baseline, run_smc_baseline
from .core import RngStream
from .diffusion import build_schedule
from .inner import InnerConfig
from .metrics import (angle, gmm_weight_ratio_bias, histogram_tvd, logz_bias,
                      predictive_log_likelihood, radius, sliced_ksd, z_bias)
from .sampler import OuterConfig, run_rdsmc
from .targets import (FunnelTarget, GaussianTarget, GmmTarget, LogRegTarget, RingsTarget,
                      gmm_generate, load_dataset)

logger = logging.getLogger("rdsmc")

RESULT_COLUMNS = ["replicate", "seed", "metric", "value", "wall_time", "resample_events", "mean_inner_ess"]
SAMPLERS = ("rdsmc", "rdsmc_is", "rdsmc_proposal", "ais_baseline", "smc_baseline")
TARGET_KINDS = ("gaussian", "gmm", "rings", "funnel", "logreg")
METRICS = ("logz_bias", "z_bias", "log_z", "gmm_weight_bias", "radius_tvd", "angle_tvd",
           "sliced_ksd", "test_log_likelihood", "mean_error")
TOP_KEYS = {"target", "sampler", "schedule", "seeds", "N", "metrics", "output_dir",
            "dump_samples", "dump_ess", "reference_size", "metric_seed"}
# ``has_grad: false`` declares a target black-box (gradient use becomes a violation)
TARGET_KEYS = {
    "gaussian": {"kind", "has_grad", "mean", "std", "scale"},
    "gmm": {"kind", "has_grad", "d", "seed", "box_width", "means", "variance", "weights"},
    "rings": {"kind", "has_grad", "radii", "radius_std"},
    "funnel": {"kind", "has_grad", "dim", "scale_variance"},
    "logreg": {"kind", "has_grad", "dataset", "split_seed"},
}
SCHEDULE_DEFAULTS = {"kind": "VP"}
DEFAULTS = {"seeds": [0], "metrics": [], "output_dir": "results", "dump_samples": False,
            "dump_ess": False, "reference_size": 200_000, "metric_seed": 12345}


class ConfigError(ValueError):
    pass


def _fields(cls):
    return {f.name for f in dataclasses.fields(cls)}


def _plain(obj):
    """Dataclass fields as YAML-safe builtins (arrays become lists)."""
    d = dataclasses.asdict(obj)
    return {k: v.tolist() if isinstance(v, (np.ndarray, np.generic)) else v for k, v in d.items()}


# ----------------------------------------------------------------------------- config


def load_config(path) -> dict:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    raw.setdefault("_base_dir", str(path.resolve().parent))
    return raw


def resolve_config(raw: dict):
    """Fill defaults and check constraints.

    Returns ``(resolved, unknown_keys, violations)``; never raises.
    """
    cfg = copy.deepcopy(raw)
    base_dir = Path(cfg.pop("_base_dir", "."))
    unknown, violations = [], []
    for key in cfg:
        if key not in TOP_KEYS:
            unknown.append(key)
    for key, val in DEFAULTS.items():
        cfg.setdefault(key, copy.deepcopy(val))

    target = cfg.get("target")
    if not isinstance(target, dict) or target.get("kind") not in TARGET_KINDS:
        violations.append(f"target.kind must be one of {TARGET_KINDS}")
        target = None
    else:
        unknown += [f"target.{k}" for k in target if k not in TARGET_KEYS[target["kind"]]]
        if target["kind"] == "logreg":
            ds = target.get("dataset")
            if ds is None:
                violations.append("target.dataset is required for logreg")
            else:
                p = Path(ds) if Path(ds).is_absolute() else base_dir / ds
                if not p.exists():
                    violations.append(f"dataset file not found: {p}")
                target["dataset"] = str(p)
            target.setdefault("split_seed", 0)

    sampler = cfg.get("sampler")
    if not isinstance(sampler, dict) or sampler.get("kind") not in SAMPLERS:
        violations.append(f"sampler.kind must be one of {SAMPLERS}")
        sampler = None
    else:
        unknown += [f"sampler.{k}" for k in sampler if k not in {"kind", "outer", "inner", "anneal"}]
        kind = sampler["kind"]
        if "N" not in cfg:
            violations.append("N is required")
        n = cfg.get("N", 1)
        if kind.startswith("rdsmc"):
            outer = dict(sampler.get("outer") or {})
            unknown += [f"sampler.outer.{k}" for k in outer if k not in _fields(OuterConfig) - {"N", "workers"}]
            outer = {k: v for k, v in outer.items() if k in _fields(OuterConfig)}
            outer["N"] = n
            outer["variant"] = {"rdsmc": "full", "rdsmc_is": "is_only", "rdsmc_proposal": "proposal_only"}[kind]
            try:
                sampler["outer"] = _plain(OuterConfig(**outer))
            except (ValueError, TypeError) as err:
                violations.append(f"sampler.outer: {err}")
            inner = dict(sampler.get("inner") or {})
            unknown += [f"sampler.inner.{k}" for k in inner if k not in _fields(InnerConfig)]
            inner = {k: v for k, v in inner.items() if k in _fields(InnerConfig)}
            try:
                ic = InnerConfig(**inner)
                sampler["inner"] = _plain(ic)
                if target is not None and ic.needs_target_grad and not _target_has_grad(target):
                    violations.append(f"{ic.identity} / gradient-based inner MCMC needs a gradient-capable target")
            except (ValueError, TypeError) as err:
                violations.append(f"sampler.inner: {err}")
        else:
            anneal = dict(sampler.get("anneal") or {})
            unknown += [f"sampler.anneal.{k}" for k in anneal if k not in _fields(AnnealConfig) - {"N"}]
            anneal = {k: v for k, v in anneal.items() if k in _fields(AnnealConfig)}
            anneal["N"] = n
            if target is not None and ("R" not in anneal or "tau" not in anneal):
                try:
                    R, tau = build_target(target).annealing_scale()
                    anneal.setdefault("R", R)
                    anneal.setdefault("tau", tau)
                except Exception as err:  # noqa: BLE001 - reported as a violation
                    violations.append(f"target: {err}")
            try:
                sampler["anneal"] = _plain(AnnealConfig(**anneal))
            except (ValueError, TypeError) as err:
                violations.append(f"sampler.anneal: {err}")
            if target is not None and not _target_has_grad(target):
                violations.append("the annealing baselines use MALA and need target gradients")

    sched = {**SCHEDULE_DEFAULTS, **(cfg.get("schedule") or {})}
    if sampler is not None and sampler["kind"].startswith("rdsmc") and isinstance(sampler.get("outer"), dict):
        T = sampler["outer"].get("T", OuterConfig.T)
        try:
            s = build_schedule(T=T, **sched)
            sched = {"kind": s.kind, **s.params}
            if s.kind == "VE" and s.g[0] <= 0:
                violations.append("VE profile with g(0) = 0 cannot be used by the sampler")
        except (ValueError, TypeError) as err:
            violations.append(f"schedule: {err}")
    cfg["schedule"] = sched

    seeds = cfg.get("seeds")
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        violations.append("seeds must be a non-empty list of non-negative integers")
    elif len(set(seeds)) != len(seeds):
        violations.append("seeds must be distinct")
    metrics = cfg.get("metrics") or []
    for m in metrics:
        if m not in METRICS:
            violations.append(f"unknown metric {m!r}")
    if target is not None:
        violations += _metric_violations(target, metrics)
    cfg["target"] = target if target is not None else cfg.get("target")
    cfg["sampler"] = sampler if sampler is not None else cfg.get("sampler")
    return cfg, unknown, violations


def _target_has_grad(target_cfg) -> bool:
    return bool(target_cfg.get("has_grad", True))


def _metric_violations(target, metrics):
    kind = target["kind"]
    allowed = {
        "gaussian": {"logz_bias", "z_bias", "log_z", "mean_error", "sliced_ksd"},
        "gmm": {"logz_bias", "z_bias", "log_z", "gmm_weight_bias", "sliced_ksd"},
        "rings": {"logz_bias", "z_bias", "log_z", "radius_tvd", "angle_tvd", "sliced_ksd"},
        "funnel": {"logz_bias", "z_bias", "log_z", "sliced_ksd"},
        "logreg": {"log_z", "test_log_likelihood"},
    }[kind]
    return [f"metric {m!r} is not available for target {kind!r}" for m in metrics
            if m in METRICS and m not in allowed]


def build_target(tcfg: dict):
    target = _build_target(tcfg)
    if not _target_has_grad(tcfg):
        target.has_grad = False
    return target


def _build_target(tcfg: dict):
    kind = tcfg["kind"]
    if kind == "gaussian":
        mean = np.atleast_1d(np.asarray(tcfg.get("mean", [0.0, 0.0]), dtype=float))
        return GaussianTarget(mean, std=tcfg.get("std", 1.0), scale=tcfg.get("scale", 1.0))
    if kind == "gmm":
        extra = {k: tcfg[k] for k in ("variance", "weights") if k in tcfg}
        if "means" in tcfg:
            return GmmTarget(tcfg["means"], **extra)
        return gmm_generate(int(tcfg.get("d", 2)), box_width=tcfg.get("box_width", 80.0),
                            seed=int(tcfg.get("seed", 0)), **extra)
    if kind == "rings":
        return RingsTarget(radii=tcfg.get("radii", (1.0, 2.0, 3.0, 4.0)),
                           radius_std=tcfg.get("radius_std", 0.15))
    if kind == "funnel":
        return FunnelTarget(dim=int(tcfg.get("dim", 10)), scale_variance=tcfg.get("scale_variance", 9.0))
    if kind == "logreg":
        train, _, _ = load_dataset(tcfg["dataset"], split_seed=int(tcfg.get("split_seed", 0)))
        return LogRegTarget(train.X, train.y)
    raise ConfigError(f"unknown target kind {kind!r}")


def validate_config(path) -> dict:
    """Diagnostics for a config file: unknown keys, violations and the resolved config."""
    try:
        raw = load_config(path)
    except ConfigError as err:
        return {"unknown_keys": [], "violations": [str(err)], "resolved": None}
    resolved, unknown, violations = resolve_config(raw)
    return {"unknown_keys": unknown, "violations": violations, "resolved": resolved}


# ----------------------------------------------------------------------------- running


def run_sampler(cfg: dict, target, seed: int, workers: int = 1):
    sampler = cfg["sampler"]
    if sampler["kind"].startswith("rdsmc"):
        outer = OuterConfig(**{**sampler["outer"], "workers": workers})
        inner = InnerConfig(**sampler["inner"])
        schedule = build_schedule(T=outer.T, **cfg["schedule"])
        return run_rdsmc(target, schedule, outer, inner, seed)
    anneal = AnnealConfig(**sampler["anneal"])
    run = run_ais_baseline if sampler["kind"] == "ais_baseline" else run_smc_baseline
    return run(target, anneal, seed)


_REF_CACHE: dict = {}


def _reference(target, cfg):
    key = (repr(cfg["target"]), cfg["reference_size"], cfg["metric_seed"])
    if key not in _REF_CACHE:
        _REF_CACHE[key] = target.sample(RngStream(cfg["metric_seed"], ("metric", 1)), cfg["reference_size"])
    return _REF_CACHE[key]


def compute_metrics(cfg: dict, target, result) -> dict:
    out = {}
    x, w = result.positions, result.weights
    for m in cfg["metrics"]:
        if m in ("logz_bias", "z_bias", "log_z") and result.degenerate:
            out[m] = float("nan")
        elif m == "log_z":
            out[m] = result.log_Z
        elif m == "logz_bias":
            out[m] = logz_bias(result.log_Z, target.log_Z)
        elif m == "z_bias":
            out[m] = z_bias(result.log_Z, target.log_Z)
        elif m == "gmm_weight_bias":
            out[m] = gmm_weight_ratio_bias(x, w, target)
        elif m == "radius_tvd":
            out[m] = histogram_tvd(radius(x), radius(_reference(target, cfg)), w, None, 256, (0.0, 8.0))
        elif m == "angle_tvd":
            out[m] = histogram_tvd(angle(x), angle(_reference(target, cfg)), w, None, 256, (-math.pi, math.pi))
        elif m == "sliced_ksd":
            out[m] = sliced_ksd(x, _reference(target, cfg), w, None, 128,
                                rng=RngStream(cfg["metric_seed"], ("metric", 2)))
        elif m == "test_log_likelihood":
            _, _, test = load_dataset(cfg["target"]["dataset"], split_seed=int(cfg["target"]["split_seed"]))
            out[m] = predictive_log_likelihood(x, w, test.X, test.y, model=target)
        elif m == "mean_error":
            out[m] = float(np.linalg.norm(np.sum(w[:, None] * x, axis=0) - target.mean))
    return out


def run_replicate(cfg: dict, replicate: int, seed: int, workers: int = 1):
    """Run one seed; returns ``(rows, result, failure message)``. Failures give NaN-valued rows."""
    target = build_target(cfg["target"])
    t0 = time.perf_counter()
    failed = ""
    try:
        result = run_sampler(cfg, target, seed, workers)
        wall = time.perf_counter() - t0
        if result.degenerate:
            failed = result.message or "degenerate run"
            values = {m: float("nan") for m in cfg["metrics"]}
        else:
            values = compute_metrics(cfg, target, result)
    except (FloatingPointError, ValueError, ArithmeticError) as err:
        wall = time.perf_counter() - t0
        result, failed = None, f"{type(err).__name__}: {err}"
        values = {m: float("nan") for m in cfg["metrics"]}
    n_events = len(result.resample_events) if result is not None else 0
    inner_ess = result.mean_inner_ess if result is not None else float("nan")
    rows = [{"replicate": replicate, "seed": seed, "metric": m, "value": values[m],
             "wall_time": wall, "resample_events": n_events, "mean_inner_ess": inner_ess}
            for m in cfg["metrics"]]
    return rows, result, failed


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else ("nan" if np.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def _write_table(path: Path, rows, columns):
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, delimiter="\t", lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r.get(c, "")) for c in columns])


def _summaries(rows, metrics):
    out = []
    for m in metrics:
        vals = np.array([r["value"] for r in rows if r["metric"] == m], dtype=float)
        ok = vals[np.isfinite(vals)]
        mean = float(ok.mean()) if ok.size else float("nan")
        se = float(ok.std(ddof=1) / np.sqrt(ok.size)) if ok.size > 1 else float("nan")
        out.append({"metric": m, "mean": mean, "stderr": se, "n_ok": int(ok.size), "n": int(vals.size)})
    return out


def _job(args):
    cfg, i, seed, workers = args
    rows, result, failed = run_replicate(cfg, i, seed, workers)
    return rows, failed, result


def run_experiment(path, output_dir=None, workers=None) -> int:
    """Run every seed of a config; returns the exit status (0 ok, 1 failures, 2 config error)."""
    diag = validate_config(path)
    if diag["violations"]:
        for v in diag["violations"]:
            logger.error("config: %s", v)
        return 2
    for k in diag["unknown_keys"]:
        logger.warning("config: unknown key %s ignored", k)
    cfg = diag["resolved"]
    out = Path(output_dir or os.environ.get("RDSMC_OUTPUT_DIR") or cfg["output_dir"])
    workers = int(workers or os.environ.get("RDSMC_WORKERS") or 1)
    try:
        if cfg["target"]["kind"] == "logreg":
            build_target(cfg["target"])
    except (OSError, ValueError) as err:
        logger.error("dataset: %s", err)
        return 2
    out.mkdir(parents=True, exist_ok=True)

    jobs = [(cfg, i, s, 1) for i, s in enumerate(cfg["seeds"])]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
            outcomes = list(pool.map(_job, jobs))
    else:
        outcomes = [_job(j) for j in jobs]

    rows, n_failed = [], 0
    for (_, i, seed, _), (rep_rows, failed, result) in zip(jobs, outcomes):
        rows += rep_rows
        if failed:
            n_failed += 1
            logger.error("replicate %d (seed %d) failed: %s", i, seed, failed)
        if result is not None and cfg["dump_samples"]:
            np.savetxt(out / f"samples_seed{seed}.tsv",
                       np.column_stack([result.positions, result.weights]), delimiter="\t")
        if result is not None and cfg["dump_ess"]:
            np.savetxt(out / f"ess_seed{seed}.tsv", np.asarray(result.ess_trace), delimiter="\t")

    summary = _summaries(rows, cfg["metrics"])
    table = rows + [{"replicate": "summary", "seed": "", "metric": s["metric"], "value": s["mean"],
                     "wall_time": float(sum(r["wall_time"] for r in rows if r["metric"] == s["metric"])),
                     "resample_events": "", "mean_inner_ess": ""} for s in summary]
    _write_table(out / "results.tsv", table, RESULT_COLUMNS)
    _write_table(out / "summary.tsv", summary, ["metric", "mean", "stderr", "n_ok", "n"])
    with (out / "config.resolved.yaml").open("w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)
    for s in summary:
        print(f"{s['metric']}\t{s['mean']:.6g} ± {s['stderr']:.3g}\t({s['n_ok']}/{s['n']} ok)")
    return 1 if n_failed else 0


def report(results_dirs, out_path=None) -> str:
    """Merge the ``summary.tsv`` files of several result directories into one table."""
    lines = ["run\tmetric\tmean\tstderr\tn_ok\tn"]
    for d in results_dirs:
        d = Path(d)
        paths = [d / "summary.tsv"] if (d / "summary.tsv").exists() else sorted(d.glob("*/summary.tsv"))
        for p in paths:
            with p.open() as fh:
                for row in csv.DictReader(fh, delimiter="\t"):
                    lines.append("\t".join([p.parent.name, row["metric"], row["mean"], row["stderr"],
                                            row["n_ok"], row["n"]]))
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    return text


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rdsmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run all seeds of an experiment config")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="check a config and print the resolved version")
    p_val.add_argument("config")
    p_rep = sub.add_parser("report", help="aggregate summary tables of result directories")
    p_rep.add_argument("results", nargs="+")
    p_rep.add_argument("-o", "--output")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    if args.command == "run":
        return run_experiment(args.config)
    if args.command == "validate":
        diag = validate_config(args.config)
        for k in diag["unknown_keys"]:
            print(f"unknown key: {k}")
        for v in diag["violations"]:
            print(f"violation: {v}")
        print(f"{len(diag['violations'])} violation(s)")
        if diag["resolved"] is not None:
            print(yaml.safe_dump(diag["resolved"], sort_keys=True), end="")
        return 0 if not diag["violations"] else 2
    sys.stdout.write(report(args.results, args.output))
    return 0


if __name__ == "__main__":
    sys.exit(main())
