"""Reverse-diffusion sequential Monte Carlo."""

from rdsmc.baselines import AnnealConfig, run_ais_baseline, run_smc_baseline
from rdsmc.core import DegenerateWeightsError, RngStream, ess, log_sum_exp
from rdsmc.diffusion import DiffusionSchedule, build_schedule
from rdsmc.inner import InnerConfig, InnerEstimate, estimate
from rdsmc.sampler import OuterConfig, RunResult, run_rdsmc
from rdsmc.targets import (FunnelTarget, GaussianTarget, GmmTarget, LogRegTarget, RingsTarget, Target,
                           gmm_generate, load_dataset)

__all__ = [
    "AnnealConfig", "DegenerateWeightsError", "DiffusionSchedule", "FunnelTarget", "GaussianTarget",
    "GmmTarget", "InnerConfig", "InnerEstimate", "LogRegTarget", "OuterConfig", "RingsTarget", "RngStream",
    "RunResult", "Target", "build_schedule", "ess", "estimate", "gmm_generate", "load_dataset",
    "log_sum_exp", "run_ais_baseline", "run_rdsmc", "run_smc_baseline",
]
