"""Geometric-annealing AIS and SMC baselines with adaptive MALA moves."""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .core import DegenerateWeightsError, RngStream, ess_from_log_weights, log_sum_exp, resample, sqnorm
from .inner import mcmc_transition
from .sampler import RunResult
from .targets import Target

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class AnnealConfig:
    """Settings for the annealing baselines.

    The initial distribution is ``N(0, (R^2 + tau^2) I)``. ``mcmc_steps`` MALA
    moves are made per level with one shared step size, adapted after every
    move from the pooled acceptance rate.
    """

    N: int = 1024
    T_anneal: int = 1000
    n_chains: int = 4
    mcmc_steps: int = 32
    delta_init: float = 0.1
    target_accept: float = 0.75
    kappa_ess: float = 0.3
    R: float = 1.0
    tau: float = 0.0
    resample_scheme: str = "systematic"

    def __post_init__(self):
        if self.N < 1 or self.T_anneal < 1 or self.mcmc_steps < 0:
            raise ValueError("N and T_anneal must be >= 1, mcmc_steps >= 0")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 0.0 <= self.kappa_ess <= 1.0:
            raise ValueError("kappa_ess must lie in [0, 1]")
        if self.delta_init <= 0:
            raise ValueError("delta_init must be positive")
        if self.R**2 + self.tau**2 <= 0:
            raise ValueError("R^2 + tau^2 must be positive")

    @property
    def init_var(self) -> float:
        return self.R**2 + self.tau**2


def annealed_logpdf(beta, rho0_logpdf, target_logpdf):
    """``(1 - beta) log rho0 + beta log pi~`` (the arguments are log-density values)."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return (1.0 - beta) * np.asarray(rho0_logpdf) + beta * np.asarray(target_logpdf)


def adapt_step_size(delta, observed_accept, target_accept, eta=0.05):
    """Multiplicative update ``delta * exp(eta (observed - target))`` clamped to [1e-8, 1e3]."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return float(np.clip(delta * np.exp(eta * (observed_accept - target_accept)), 1e-8, 1e3))


def _rho0(x, var):
    d = x.shape[-1]
    return -0.5 * sqnorm(x) / var - 0.5 * d * (LOG_2PI + np.log(var)), -x / var


def _anneal(target: Target, config: AnnealConfig, seed: int, kappa: float) -> RunResult:
    N, T, d = config.N, config.T_anneal, target.dim
    var = config.init_var
    x = np.sqrt(var) * RngStream(seed, (0, "baseline_init")).normal((N, d))
    betas = np.arange(T + 1) / T

    def evaluate(beta):
        def fn(z):
            lr, gr = _rho0(z, var)
            lp, gp = target.evaluate(z)
            return (1 - beta) * lr + beta * lp, (1 - beta) * gr + beta * gp, lr, lp, gr, gp
        return fn

    def reweight(beta, c):
        lr, lp, gr, gp = c[2:]
        return ((1 - beta) * lr + beta * lp, (1 - beta) * gr + beta * gp) + c[2:]

    cur = evaluate(0.0)(x)
    lw = np.zeros(N)
    log_Z = 0.0
    delta = config.delta_init
    result = RunResult(positions=x, weights=np.full(N, 1.0 / N), log_Z=float("nan"))
    try:
        for k in range(1, T + 1):
            # weight for moving from rho_{k-1} to rho_k at the current state
            lr, lp = cur[2], cur[3]
            with np.errstate(invalid="ignore"):
                lw = lw + (betas[k] - betas[k - 1]) * (lp - lr)
            lw = np.where(np.isnan(lw), -np.inf, lw)
            lse = log_sum_exp(lw)
            if not np.isfinite(lse):
                raise DegenerateWeightsError(f"all weights vanished at level {k}")
            ess_val = float(ess_from_log_weights(lw))
            result.ess_trace.append(ess_val)
            if k < T and ess_val / N < kappa:
                log_Z += lse - np.log(N)
                idx = resample(np.exp(lw - lse), config.resample_scheme,
                               RngStream(seed, (k, "baseline_resample")), N)
                x = x[idx]
                cur = tuple(a[idx] for a in cur)
                lw = np.zeros(N)
                result.resample_events.append(k)
            if k == T:
                break
            fn = evaluate(betas[k])
            cur = reweight(betas[k], cur)
            rng = RngStream(seed, (k, "baseline_mcmc"))
            accs = []
            for _ in range(config.mcmc_steps):
                x, accepted, cur = mcmc_transition("MALA", fn, x, delta, rng, current=cur)
                acc = float(np.mean(accepted))
                accs.append(acc)
                delta = adapt_step_size(delta, acc, config.target_accept)
            result.inner_acceptance.append(float(np.mean(accs)) if accs else float("nan"))
        log_Z += lse - np.log(N)
    except DegenerateWeightsError as err:
        result.positions = x
        result.weights = np.full(N, np.nan)
        result.degenerate = True
        result.message = str(err)
        return result
    result.positions = x
    result.weights = np.exp(lw - lse)
    result.log_Z = float(log_Z)
    result.step_size = delta
    return result


def run_ais_baseline(target: Target, config: AnnealConfig, seed: int) -> RunResult:
    """Annealed importance sampling from ``rho0`` to ``pi~`` with ``beta_k = k / T_anneal``."""
    return _anneal(target, config, seed, kappa=0.0)


def run_smc_baseline(target: Target, config: AnnealConfig, seed: int) -> RunResult:
    """AIS with ESS-gated resampling at threshold ``config.kappa_ess``."""
    return _anneal(target, config, seed, kappa=config.kappa_ess)
