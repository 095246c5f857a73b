"""Noising schedules and the Gaussian kernels of the discretized diffusion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RngStream, sqnorm

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-step coefficients on the uniform grid ``tau_t = t / T``, ``t = 0..T``.

    Attributes
    ----------
    kind : {"VP", "VE"}
    T : int
        Number of discretization steps; ``delta = 1 / T``.
    params : dict
        Parameters the schedule was built from.
    alpha, sigma, f, g : ndarray of shape (T + 1,)
        Forward-kernel scale and noise level, drift and diffusion coefficients.
    """

    kind: str
    T: int
    params: dict
    alpha: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)

    @property
    def delta(self) -> float:
        return 1.0 / self.T

    @property
    def tau(self) -> np.ndarray:
        return np.arange(self.T + 1) / self.T

    @property
    def g2(self) -> np.ndarray:
        return self.g**2

    @property
    def reference_std(self) -> float:
        return 1.0 if self.kind == "VP" else float(self.sigma[-1])


VP_DEFAULTS = {"b_min": 0.1, "b_max": 20.0}
VE_DEFAULTS = {"profile": "exponential", "sigma_max": 10.0, "sigma_min": 0.01}


def build_schedule(kind: str = "VP", T: int = 100, **params) -> DiffusionSchedule:
    """Build a VP or VE schedule on ``T`` uniform steps.

    VP uses the linear rate ``b(tau) = b_min + tau (b_max - b_min)`` with
    ``alpha = exp(-B/2)``, ``sigma^2 = 1 - exp(-B)``, ``f = -b/2``, ``g = sqrt(b)``
    where ``B(tau) = b_min tau + (b_max - b_min) tau^2 / 2``.

    VE has ``alpha = 1``, ``f = 0`` and ``g^2 = d sigma^2 / d tau`` for one of the
    profiles ``linear`` (``sigma_max tau``), ``quadratic`` (``sigma_max tau^2``) or
    ``exponential`` (``sigma^2 = sigma_min^2 (r^(2 tau) - 1)`` scaled so that
    ``sigma(1) = sigma_max``).
    """
    if int(T) != T or T < 1:
        raise ValueError("T must be a positive integer")
    T = int(T)
    tau = np.arange(T + 1) / T
    kind = kind.upper()
    if kind == "VP":
        p = {**VP_DEFAULTS, **params}
        b_min, b_max = float(p["b_min"]), float(p["b_max"])
        if not 0.0 < b_min < b_max:
            raise ValueError("VP schedule requires 0 < b_min < b_max")
        b = b_min + tau * (b_max - b_min)
        integral = b_min * tau + 0.5 * (b_max - b_min) * tau**2
        alpha = np.exp(-0.5 * integral)
        sigma = np.sqrt(-np.expm1(-integral))
        f = -0.5 * b
        g = np.sqrt(b)
    elif kind == "VE":
        p = {**VE_DEFAULTS, **params}
        profile, s_max = p["profile"], float(p["sigma_max"])
        if s_max <= 0:
            raise ValueError("VE schedule requires sigma_max > 0")
        if profile == "linear":
            sigma = s_max * tau
            g2 = 2.0 * s_max**2 * tau
        elif profile == "quadratic":
            sigma = s_max * tau**2
            g2 = 4.0 * s_max**2 * tau**3
        elif profile == "exponential":
            s_min = float(p["sigma_min"])
            if not 0.0 < s_min < s_max:
                raise ValueError("exponential VE profile requires 0 < sigma_min < sigma_max")
            log_r2 = np.log1p((s_max / s_min) ** 2)
            sigma = s_min * np.sqrt(np.expm1(tau * log_r2))
            g2 = s_min**2 * log_r2 * np.exp(tau * log_r2)
        else:
            raise ValueError(f"unknown VE profile {profile!r}")
        alpha = np.ones_like(tau)
        f = np.zeros_like(tau)
        g = np.sqrt(g2)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return DiffusionSchedule(kind, T, dict(p), alpha, sigma, f, g)


def _gauss_logpdf(x, mean, var):
    d = np.shape(x)[-1]
    r = np.asarray(x) - mean
    return -0.5 * sqnorm(r) / var - 0.5 * d * (LOG_2PI + np.log(var))


def forward_kernel_logpdf(schedule: DiffusionSchedule, t: int, x_t, x_next):
    """Log-density of ``N(x_next | x_t (1 + f_t delta), g_t^2 delta I)``."""
    if not 0 <= t < schedule.T:
        raise ValueError("forward kernel needs 0 <= t < T")
    var = schedule.g2[t] * schedule.delta
    if var <= 0:
        raise ValueError(f"forward kernel variance is zero at t={t}")
    mean = np.asarray(x_t, dtype=float) * (1.0 + schedule.f[t] * schedule.delta)
    return _gauss_logpdf(x_next, mean, var)


def reverse_mean(schedule: DiffusionSchedule, t: int, x_tp1, score):
    """Mean of the Euler reverse step from ``t + 1`` to ``t``."""
    x_tp1 = np.asarray(x_tp1, dtype=float)
    drift = schedule.f[t + 1] * x_tp1 - schedule.g2[t + 1] * np.asarray(score)
    return x_tp1 - drift * schedule.delta


def reverse_logpdf(schedule: DiffusionSchedule, t: int, x_t, x_tp1, score):
    var = schedule.g2[t + 1] * schedule.delta
    return _gauss_logpdf(x_t, reverse_mean(schedule, t, x_tp1, score), var)


def reverse_proposal(schedule: DiffusionSchedule, t: int, x_tp1, score, rng=None, noise=None):
    """Sample ``x_t`` from the reverse kernel and return ``(x_t, logpdf)``.

    Either ``rng`` (an :class:`RngStream`) or pre-drawn standard ``noise`` of the
    same shape as ``x_tp1`` must be supplied.
    """
    if not 0 <= t < schedule.T:
        raise ValueError("reverse proposal needs 0 <= t < T")
    score = np.asarray(score, dtype=float)
    if not np.all(np.isfinite(score)):
        raise ValueError("non-finite score estimate")
    mean = reverse_mean(schedule, t, x_tp1, score)
    var = schedule.g2[t + 1] * schedule.delta
    if noise is None:
        noise = rng.normal(np.shape(mean))
    x_t = mean + np.sqrt(var) * noise
    return x_t, _gauss_logpdf(x_t, mean, var)


def reference_logpdf(schedule: DiffusionSchedule, x_T):
    """``N(0, I)`` for VP and ``N(0, sigma_T^2 I)`` for VE."""
    return _gauss_logpdf(x_T, 0.0, schedule.reference_std**2)


def reference_sample(schedule: DiffusionSchedule, rng: RngStream, n: int, d: int):
    return schedule.reference_std * rng.normal((n, d))
