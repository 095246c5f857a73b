"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line (also repeated in the terminal summary)
and then asserts. Criteria 3-7 are long and run only with ``--runslow``.
"""

import csv
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from rdsmc.cli import run_experiment
from rdsmc.diffusion import build_schedule
from rdsmc.inner import InnerConfig
from rdsmc.sampler import OuterConfig, run_rdsmc
from rdsmc.targets import GaussianTarget

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def record(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({name}): {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def run_config(name, tmp_path):
    t0 = time.perf_counter()
    status = run_experiment(CONFIGS / name, output_dir=tmp_path / Path(name).stem)
    elapsed = time.perf_counter() - t0
    with open(tmp_path / Path(name).stem / "summary.tsv") as fh:
        summary = {r["metric"]: r for r in csv.DictReader(fh, delimiter="\t")}
    with open(tmp_path / Path(name).stem / "results.tsv") as fh:
        rows = [r for r in csv.DictReader(fh, delimiter="\t") if r["replicate"] != "summary"]
    return status, summary, rows, elapsed


def mean_of(summary, metric):
    return float(summary[metric]["mean"])


# -------------------------------------------------------------------------- 1


def test_criterion_1_unbiased_normalizer():
    target = GaussianTarget(np.zeros(2), scale=3.0)
    schedule = build_schedule("VP", 50)
    variants = {
        "multinomial": (OuterConfig(N=64, T=50, resample_scheme="multinomial", kappa_ess=1.0), {}),
        "systematic": (OuterConfig(N=64, T=50, resample_scheme="systematic", kappa_ess=1.0), {}),
        "delayed t_start=25": (OuterConfig(N=64, T=50, resample_scheme="multinomial", kappa_ess=1.0,
                                           t_start_resampling=25), {}),
        "AIS n_steps=5": (OuterConfig(N=64, T=50, resample_scheme="multinomial", kappa_ess=1.0),
                          dict(estimator="AIS", n_steps=5)),
    }
    t0 = time.perf_counter()
    details, ok = [], True
    for name, (outer, extra) in variants.items():
        inner = InnerConfig(n_is=32, proposal="gaussian_approx", proposal_var=2.0, **extra)
        runs = [run_rdsmc(target, schedule, outer, inner, seed=k) for k in range(200)]
        z = np.exp([r.log_Z for r in runs])
        se = z.std(ddof=1) / np.sqrt(z.size)
        good = abs(z.mean() - 3.0) < 4 * se and all(r.resample_events for r in runs)
        ok &= good
        details.append(f"{name}: mean {z.mean():.3f} (SE {se:.3f})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 4 * 120
    record(1, "unbiased Z", ok, "; ".join(details) + f"; {elapsed:.0f}s for 4 variants")


# -------------------------------------------------------------------------- 2


def test_criterion_2_consistency():
    mu = np.array([3.0, -2.0])
    target = GaussianTarget(mu)
    schedule = build_schedule("VP", 100)
    inner = InnerConfig(n_is=16, proposal="gaussian_approx", proposal_var=10.0)
    t0 = time.perf_counter()
    medians = []
    for N in (64, 256, 1024, 4096):
        errs = []
        for seed in range(20):
            r = run_rdsmc(target, schedule, OuterConfig(N=N, T=100, resample_scheme="multinomial"), inner, seed)
            errs.append(np.linalg.norm(r.weights @ r.positions - mu))
        medians.append(float(np.median(errs)))
    elapsed = time.perf_counter() - t0
    ok = all(a > b for a, b in zip(medians, medians[1:])) and elapsed < 300
    record(2, "consistency", ok, f"median errors {np.round(medians, 4).tolist()}; {elapsed:.0f}s")


# -------------------------------------------------------------------------- 3


@pytest.mark.slow
def test_criterion_3_gmm(tmp_path):
    status, full, full_rows, t_full = run_config("gmm2.yaml", tmp_path)
    status_p, prop, prop_rows, t_prop = run_config("gmm2_proposal.yaml", tmp_path)
    bias, logz = mean_of(full, "gmm_weight_bias"), mean_of(full, "logz_bias")
    bias_p = mean_of(prop, "gmm_weight_bias")
    elapsed = t_full + t_prop
    ok = status == 0 and status_p == 0 and bias <= 0.05 and logz <= 0.1 and bias_p > bias and elapsed < 900
    record(3, "GMM d=2", ok, f"weight bias {bias:.4f}, |log Z| bias {logz:.4f}, "
           f"proposal-only weight bias {bias_p:.4f}; {elapsed:.0f}s")


# -------------------------------------------------------------------------- 4


@pytest.mark.slow
def test_criterion_4_rings(tmp_path):
    status, summ, _, elapsed = run_config("rings.yaml", tmp_path)
    tvd, logz = mean_of(summ, "radius_tvd"), mean_of(summ, "logz_bias")
    ok = status == 0 and tvd <= 0.18 and logz <= 0.06 and elapsed < 1200
    record(4, "Rings", ok, f"radius TVD {tvd:.4f}, |log Z| bias {logz:.4f}; {elapsed:.0f}s")


# -------------------------------------------------------------------------- 5


@pytest.mark.slow
def test_criterion_5_funnel(tmp_path):
    status, summ, _, elapsed = run_config("funnel.yaml", tmp_path)
    ksd, logz = mean_of(summ, "sliced_ksd"), mean_of(summ, "logz_bias")
    ok = status == 0 and ksd <= 0.16 and logz <= 0.6 and elapsed < 1800
    record(5, "Funnel", ok, f"sliced KSD {ksd:.4f}, |log Z| bias {logz:.4f}; {elapsed:.0f}s")


# -------------------------------------------------------------------------- 6


@pytest.mark.slow
def test_criterion_6_logreg_ionosphere(tmp_path):
    status, summ, _, elapsed = run_config("logreg_ionosphere.yaml", tmp_path)
    ll = mean_of(summ, "test_log_likelihood")
    ok = status == 0 and -95.0 <= ll <= -83.0 and elapsed < 7200
    record(6, "logistic regression, Ionosphere", ok, f"test log-likelihood {ll:.3f}; {elapsed:.0f}s")


# -------------------------------------------------------------------------- 7


@pytest.mark.slow
def test_criterion_7_baselines(tmp_path):
    details, ok, total = [], True, 0.0
    for name in ("rings_ais.yaml", "rings_smc.yaml"):
        status, summ, _, elapsed = run_config(name, tmp_path)
        tvd, logz = mean_of(summ, "radius_tvd"), mean_of(summ, "logz_bias")
        ok &= status == 0 and tvd <= 0.15 and logz <= 0.1
        total += elapsed
        details.append(f"{Path(name).stem}: radius TVD {tvd:.4f}, |log Z| bias {logz:.4f}")
    ok &= total < 1200
    record(7, "AIS/SMC baselines on Rings", ok, "; ".join(details) + f"; {total:.0f}s")


# -------------------------------------------------------------------------- 8


def test_criterion_8_property_suites():
    suites = ["tests/test_properties.py", "tests/test_core.py", "tests/test_diffusion.py",
              "tests/test_targets.py::TestGradients"]
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *suites],
                          cwd=ROOT, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    record(8, "property suites", proc.returncode == 0 and elapsed < 60, f"{tail}; {elapsed:.0f}s")
