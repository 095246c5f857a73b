"""Reverse-diffusion SMC: the outer particle loop and its weight bookkeeping."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    DegenerateWeightsError,
    ParticleSystem,
    RngStream,
    ess_from_log_weights,
    log_sum_exp,
    resample,
)
from .diffusion import (
    DiffusionSchedule,
    forward_kernel_logpdf,
    reference_logpdf,
    reference_sample,
    reverse_proposal,
)
from .inner import InnerConfig, InnerEstimate, estimate
from .targets import Target

VARIANTS = ("full", "is_only", "proposal_only")
SCHEMES = ("systematic", "multinomial")


@dataclass
class OuterConfig:
    """Outer-loop settings.

    ``t_start_resampling=None`` means ``T`` (resampling allowed at every step).
    ``block_size`` fixes how particles are grouped for inner estimation; each
    block has its own random stream, so results do not depend on ``workers``.
    """

    N: int = 1024
    T: int = 100
    resample_scheme: str = "systematic"
    kappa_ess: float = 0.3
    t_start_resampling: Optional[int] = None
    variant: str = "full"
    block_size: int = 1024
    workers: int = 1

    def __post_init__(self):
        if self.N < 1 or self.T < 1:
            raise ValueError("N and T must be >= 1")
        if self.resample_scheme not in SCHEMES:
            raise ValueError(f"resample_scheme must be one of {SCHEMES}")
        if not 0.0 <= self.kappa_ess <= 1.0:
            raise ValueError("kappa_ess must lie in [0, 1]")
        if self.t_start_resampling is None:
            self.t_start_resampling = self.T
        if not 0 <= self.t_start_resampling <= self.T:
            raise ValueError("t_start_resampling must lie in [0, T]")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.block_size < 1 or self.workers < 1:
            raise ValueError("block_size and workers must be >= 1")


@dataclass
class RunResult:
    """Weighted sample, normalizing-constant estimate and per-step diagnostics.

    ``ess_trace[k]`` is the ESS of the weights at step ``T - k``.
    ``resample_events`` lists the steps ``t`` whose move was preceded by resampling.
    """

    positions: np.ndarray
    weights: np.ndarray
    log_Z: float
    ess_trace: list = field(default_factory=list)
    resample_events: list = field(default_factory=list)
    inner_acceptance: list = field(default_factory=list)
    inner_ess: list = field(default_factory=list)
    degenerate: bool = False
    message: str = ""
    trajectory: Optional[list] = None
    step_size: Optional[float] = None

    @property
    def mean_inner_ess(self) -> float:
        vals = [v for v in self.inner_ess if np.isfinite(v)]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def mean_inner_acceptance(self) -> float:
        vals = [v for v in self.inner_acceptance if np.isfinite(v)]
        return float(np.mean(vals)) if vals else float("nan")


def initial_log_weights(schedule: DiffusionSchedule, x_T, log_marginal_T):
    """``log w_T = log p^_T(x_T) - log p_ref(x_T)``."""
    return np.asarray(log_marginal_T, dtype=float) - reference_logpdf(schedule, x_T)


def intermediate_log_weight(schedule: DiffusionSchedule, t, x_t, x_tp1, log_marginal_t,
                            log_marginal_tp1, proposal_logpdf, prev_normalized_log_weights=None):
    """Incremental log-weight of the move ``x_{t+1} -> x_t``.

    ``log p^_t + log p(x_{t+1} | x_t) - log p^_{t+1} - log q(x_t | x_{t+1})``.
    When the previous system was not resampled, pass its normalized log-weights;
    ``log(N w_{t+1})`` is then added. Particles whose previous marginal (or
    weight) is ``-inf`` get ``-inf``.
    """
    fwd = forward_kernel_logpdf(schedule, t, x_t, x_tp1)
    lm_t = np.asarray(log_marginal_t, dtype=float)
    lm_tp1 = np.asarray(log_marginal_tp1, dtype=float)
    dead = np.isneginf(lm_tp1)
    with np.errstate(invalid="ignore"):
        lw = lm_t + fwd - np.where(dead, 0.0, lm_tp1) - proposal_logpdf
    if prev_normalized_log_weights is not None:
        prev = np.asarray(prev_normalized_log_weights, dtype=float)
        n = np.size(prev)
        dead = dead | np.isneginf(prev)
        with np.errstate(invalid="ignore"):
            lw = lw + np.log(n) + np.where(np.isneginf(prev), 0.0, prev)
    return np.where(dead, -np.inf, lw)


def _inner_blocks(target, alpha, sigma, x, inner: InnerConfig, seed, t, outer: OuterConfig):
    """Inner estimates for all particles, computed block by block."""
    n = x.shape[0]
    starts = list(range(0, n, outer.block_size))

    def one(j):
        s = starts[j]
        return estimate(target, alpha, sigma, x[s:s + outer.block_size], inner,
                        RngStream(seed, (t, 0, j)))

    if outer.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(outer.workers) as pool:
            parts = list(pool.map(one, range(len(starts))))
    else:
        parts = [one(j) for j in range(len(starts))]
    return InnerEstimate(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                           ("score", "log_marginal", "ess", "acceptance", "degenerate")))


def run_rdsmc(target: Target, schedule: DiffusionSchedule, outer: OuterConfig,
              inner: InnerConfig, seed: int, record_trajectory: bool = False) -> RunResult:
    """Run the reverse-diffusion SMC sampler.

    Particles start from the reference and are moved by Euler reverse steps whose
    score comes from the inner estimator. Weights target the noised marginals
    ``p_t`` estimated by the same inner runs; at ``t = 0`` the exact ``pi~`` is
    used. Resampling happens before the move to step ``t`` when
    ``t <= t_start_resampling`` and ``ESS / N < kappa_ess``.

    Degenerate weights stop the run and return a result with ``degenerate=True``.
    """
    if schedule.T != outer.T:
        raise ValueError("schedule and outer config disagree on T")
    if schedule.kind == "VE" and schedule.g[0] <= 0:
        raise ValueError("VE profile has g(0) = 0; use the exponential profile")
    N, T, d = outer.N, outer.T, target.dim
    kappa = 0.0 if outer.variant != "full" else outer.kappa_ess

    x = reference_sample(schedule, RngStream(seed, (T, "reference")), N, d)
    est = _inner_blocks(target, schedule.alpha[T], schedule.sigma[T], x, inner, seed, T, outer)
    system = ParticleSystem(x, initial_log_weights(schedule, x, est.log_marginal),
                            est.score, est.log_marginal, step_index=T)
    result = RunResult(positions=x, weights=np.full(N, 1.0 / N), log_Z=float("nan"),
                       trajectory=[x.copy()] if record_trajectory else None)
    result.inner_acceptance.append(float(np.nanmean(est.acceptance)) if np.any(np.isfinite(est.acceptance)) else float("nan"))
    result.inner_ess.append(float(np.mean(est.ess)))
    log_Z = 0.0

    try:
        for t in range(T - 1, -1, -1):
            lw = system.log_weights
            if np.any(np.isnan(lw)):
                raise DegenerateWeightsError(f"NaN log-weight at step {t + 1}")
            lse = log_sum_exp(lw)
            if not np.isfinite(lse):
                raise DegenerateWeightsError(f"all weights vanished at step {t + 1}")
            log_Z += lse - np.log(N)
            norm_lw = lw - lse
            ess_val = float(ess_from_log_weights(lw))
            result.ess_trace.append(ess_val)

            if t <= outer.t_start_resampling and ess_val / N < kappa:
                idx = resample(np.exp(norm_lw), outer.resample_scheme, RngStream(seed, (t, "resample")), N)
                system = system.take(idx)
                result.resample_events.append(t)
                prev = None
            else:
                prev = norm_lw

            x_t, log_q = reverse_proposal(schedule, t, system.positions, system.scores,
                                          rng=RngStream(seed, (t, "propagate")))
            if t > 0:
                est = _inner_blocks(target, schedule.alpha[t], schedule.sigma[t], x_t,
                                    inner, seed, t, outer)
                lm_t, scores = est.log_marginal, est.score
                acc = est.acceptance
                result.inner_acceptance.append(float(np.nanmean(acc)) if np.any(np.isfinite(acc)) else float("nan"))
                result.inner_ess.append(float(np.mean(est.ess)))
            else:
                lm_t, scores = target.evaluate(x_t, grad=False), None
            lw_t = intermediate_log_weight(schedule, t, x_t, system.positions, lm_t,
                                           system.log_marginals, log_q, prev)
            system = ParticleSystem(x_t, lw_t, scores, lm_t, step_index=t)
            if record_trajectory:
                result.trajectory.append(x_t.copy())

        lw = system.log_weights
        if np.any(np.isnan(lw)):
            raise DegenerateWeightsError("NaN log-weight at step 0")
        lse = log_sum_exp(lw)
        if not np.isfinite(lse):
            raise DegenerateWeightsError("all weights vanished at step 0")
        log_Z += lse - np.log(N)
        result.ess_trace.append(float(ess_from_log_weights(lw)))
        weights = np.exp(lw - lse)
    except DegenerateWeightsError as err:
        result.positions = system.positions
        result.weights = np.full(system.n, np.nan)
        result.log_Z = float("nan")
        result.degenerate = True
        result.message = str(err)
        return result

    result.positions = system.positions
    result.weights = np.full(N, 1.0 / N) if outer.variant == "proposal_only" else weights
    result.log_Z = float(log_Z)
    return result
