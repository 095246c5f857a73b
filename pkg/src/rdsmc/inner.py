"""Nested Monte Carlo estimates of the noised score and marginal.

Given a noised point ``x_t`` the denoising posterior is
``p(u | x_t) ∝ pi~(u) N(x_t | alpha_t u, sigma_t^2 I)``; its normalizer is
``Z p_t(x_t)``. Importance sampling (optionally annealed) targets this posterior,
and the weights give both a score estimate and an unbiased marginal estimate.

Every function here is batched: ``x`` may be ``(d,)`` or ``(B, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import RngStream, batched_systematic_resample, log_sum_exp, sqnorm
from .targets import Target

LOG_2PI = np.log(2.0 * np.pi)

ESTIMATORS = ("IS", "AIS", "AIS_resample")
_ESTIMATOR_ALIASES = {"AIS_with_resampling": "AIS_resample"}
IDENTITIES = ("DSI", "TSI", "MSI")
KERNELS = ("ULA", "MALA", "HMC")
PROPOSALS = ("reversed_kernel", "centered", "gaussian_approx")


@dataclass
class InnerConfig:
    estimator: str = "IS"
    identity: str = "DSI"
    n_is: int = 32
    n_steps: int = 1
    m_steps: int = 1
    kernel: str = "MALA"
    delta_mcmc: float = 0.05
    hmc_leapfrog: int = 5
    proposal: Union[str, Callable] = "reversed_kernel"
    # moments of a Gaussian approximation of the target, for "gaussian_approx"
    # scalars or per-coordinate sequences
    proposal_mean: Union[float, Sequence[float]] = 0.0
    proposal_var: Union[float, Sequence[float]] = 1.0
    score_clip: Optional[float] = None
    # optional [log c, log C] clamp on the marginal estimate; off by default
    log_marginal_clamp: Optional[tuple] = None

    def __post_init__(self):
        self.estimator = _ESTIMATOR_ALIASES.get(self.estimator, self.estimator)
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.identity not in IDENTITIES:
            raise ValueError(f"identity must be one of {IDENTITIES}")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if isinstance(self.proposal, str) and self.proposal not in PROPOSALS:
            raise ValueError(f"proposal must be one of {PROPOSALS} or a callable")
        if self.n_is < 1 or self.n_steps < 1 or self.m_steps < 1:
            raise ValueError("n_is, n_steps and m_steps must be >= 1")
        if self.estimator == "IS" and self.n_steps != 1:
            raise ValueError("the IS estimator has n_steps = 1")
        if self.n_steps > 1 and self.delta_mcmc <= 0:
            raise ValueError("delta_mcmc must be positive")
        if np.ndim(self.proposal_var) > 0:
            self.proposal_var = np.asarray(self.proposal_var, dtype=float)
        if np.ndim(self.proposal_mean) > 0:
            self.proposal_mean = np.asarray(self.proposal_mean, dtype=float)
        if np.any(np.asarray(self.proposal_var) <= 0):
            raise ValueError("proposal_var must be positive")
        if self.score_clip is not None and self.score_clip <= 0:
            raise ValueError("score_clip must be positive")

    @property
    def needs_target_grad(self) -> bool:
        return self.identity != "DSI" or self.n_steps > 1


@dataclass
class InnerEstimate:
    """Score and log-marginal estimates with per-point diagnostics.

    ``degenerate`` marks points whose inner weights all underflowed; their
    ``log_marginal`` is ``-inf`` and their score is set to zero.
    """

    score: np.ndarray
    log_marginal: np.ndarray
    ess: np.ndarray
    acceptance: np.ndarray
    degenerate: np.ndarray


@dataclass
class GaussianProposal:
    """Gaussian ``N(mean, diag(var))`` with ``mean`` of shape ``(B, d)``.

    ``var`` is a scalar (isotropic) or a length-``d`` vector.
    """

    mean: np.ndarray
    var: Union[float, np.ndarray]

    def sample(self, noise):
        return self.mean[..., None, :] + np.sqrt(self.var) * noise

    def logpdf(self, u):
        r = u - self.mean[..., None, :]
        d = u.shape[-1]
        if np.ndim(self.var) == 0:
            return -0.5 * sqnorm(r) / self.var - 0.5 * d * (LOG_2PI + np.log(self.var))
        return -0.5 * sqnorm(r / np.sqrt(self.var)) - 0.5 * (d * LOG_2PI + np.sum(np.log(self.var)))

    def grad_logpdf(self, u):
        return (self.mean[..., None, :] - u) / self.var


def inner_proposal(kind, x_t, alpha: float, sigma: float, prior_mean=0.0, prior_var=1.0) -> GaussianProposal:
    """Initial proposal for the denoising posterior.

    ``reversed_kernel`` is ``N(x/alpha, sigma^2/alpha^2 I)``; ``centered`` keeps the
    variance but centres at ``x``. ``gaussian_approx`` is the exact posterior
    obtained when the target is replaced by ``N(prior_mean, diag(prior_var))``; unlike
    the other two it stays well scaled when ``alpha`` is small. A callable
    ``kind(x, alpha, sigma)`` returning a :class:`GaussianProposal` is used as is.
    """
    if callable(kind):
        return kind(np.atleast_2d(x_t), alpha, sigma)
    if alpha <= 0:
        raise ValueError("inner proposal needs alpha > 0")
    x_t = np.atleast_2d(np.asarray(x_t, dtype=float))
    var = (sigma / alpha) ** 2
    if kind == "reversed_kernel":
        return GaussianProposal(x_t / alpha, var)
    if kind == "centered":
        return GaussianProposal(x_t.copy(), var)
    if kind == "gaussian_approx":
        post_var = 1.0 / (1.0 / prior_var + alpha**2 / sigma**2)
        mean = post_var * (prior_mean / prior_var + alpha * x_t / sigma**2)
        return GaussianProposal(mean, post_var)
    raise ValueError(f"unknown proposal {kind!r}")


def clip_score(score, threshold: float):
    """Rescale rows of ``score`` whose Euclidean norm exceeds ``threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    score = np.asarray(score, dtype=float)
    norm = np.linalg.norm(score, axis=-1, keepdims=True)
    factor = np.where(norm > threshold, threshold / np.where(norm > 0, norm, 1.0), 1.0)
    return score * factor


def combine_identity(identity, weights, u, x_t, alpha, sigma, target=None, grad_u=None):
    """Score estimate from a weighted posterior sample.

    Parameters
    ----------
    identity : {"DSI", "TSI", "MSI"}
    weights : ndarray (..., n)
        Normalized weights over the posterior particles.
    u : ndarray (..., n, d)
    x_t : ndarray (..., d)
    grad_u : ndarray (..., n, d), optional
        ``grad log pi~(u)``; computed from ``target`` when omitted (TSI/MSI only).
    """
    w = np.asarray(weights, dtype=float)[..., None]
    x_t = np.asarray(x_t, dtype=float)
    u_bar = np.sum(w * u, axis=-2)
    if identity == "DSI":
        return (alpha * u_bar - x_t) / sigma**2
    if grad_u is None:
        if target is None or not getattr(target, "has_grad", True):
            raise ValueError(f"{identity} needs the target gradient")
        grad_u = target.evaluate(u)[1]
    g_bar = np.sum(w * grad_u, axis=-2)
    if identity == "TSI":
        return g_bar / alpha
    if identity == "MSI":
        return (alpha * (u_bar + g_bar) - x_t) / (alpha**2 + sigma**2)
    raise ValueError(f"unknown identity {identity!r}")


# --------------------------------------------------------------------------- MCMC


def mcmc_transition(kernel, log_density_fn, x, delta, rng: RngStream, current=None, n_leapfrog=5):
    """One ULA / MALA / HMC move, vectorized over the leading axes of ``x``.

    ``log_density_fn(x)`` returns ``(logp, grad, *extras)``; extras are per-point
    arrays carried along with accept/reject. ``current`` is that tuple at ``x``.

    Returns
    -------
    x_new, accepted, evaluation at x_new
    """
    if delta <= 0:
        raise ValueError("MCMC step size must be positive")
    if current is None:
        current = log_density_fn(x)
    lp, g = current[0], current[1]
    # points already at log-density -inf stay frozen; anywhere else this is a target bug
    bad_grad = ~np.all(np.isfinite(g), axis=-1)
    if np.any(bad_grad & np.isfinite(lp)):
        raise FloatingPointError("non-finite gradient at the current MCMC state")
    if np.any(bad_grad):
        g = np.where(bad_grad[..., None], 0.0, g)

    if kernel == "ULA":
        x_new = x + 0.5 * delta**2 * g + delta * rng.normal(x.shape)
        new = log_density_fn(x_new)
        if not np.all(np.isfinite(new[1])):
            raise FloatingPointError("ULA moved to a point with non-finite gradient")
        return x_new, np.ones(x.shape[:-1], dtype=bool), new

    if kernel == "MALA":
        xi = rng.normal(x.shape)
        prop = x + 0.5 * delta**2 * g + delta * xi
        new = log_density_fn(prop)
        back = x - prop - 0.5 * delta**2 * new[1]
        log_ratio = (new[0] - lp) - 0.5 * sqnorm(back) / delta**2 + 0.5 * sqnorm(xi)
    elif kernel == "HMC":
        p0 = rng.normal(x.shape)
        p = p0 + 0.5 * delta * g
        prop = x.copy()
        for i in range(n_leapfrog):
            prop = prop + delta * p
            new = log_density_fn(prop)
            step = delta if i < n_leapfrog - 1 else 0.5 * delta
            p = p + step * new[1]
        log_ratio = (new[0] - lp) - 0.5 * sqnorm(p) + 0.5 * sqnorm(p0)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")

    finite = np.isfinite(log_ratio) & np.all(np.isfinite(new[1]), axis=-1)
    log_u = np.log(rng.uniform(log_ratio.shape))
    accept = finite & (log_u < np.where(finite, log_ratio, -np.inf))
    x_new = np.where(accept[..., None], prop, x)
    merged = tuple(_select(accept, a, b) for a, b in zip(new, current))
    return x_new, accept, merged


def _select(mask, a, b):
    a, b = np.asarray(a), np.asarray(b)
    m = mask.reshape(mask.shape + (1,) * (a.ndim - mask.ndim))
    return np.where(m, a, b)


# ------------------------------------------------------------------ estimators


class _Posterior:
    """Pieces of the annealed posterior family for a batch of noised points."""

    def __init__(self, target: Target, x, alpha, sigma, proposal: GaussianProposal, need_grad):
        self.target, self.x, self.alpha, self.sigma = target, x, alpha, sigma
        self.q = proposal
        self.need_grad = need_grad

    def log_lik(self, u):
        r = self.x[..., None, :] - self.alpha * u
        d = u.shape[-1]
        return -0.5 * sqnorm(r) / self.sigma**2 - 0.5 * d * (LOG_2PI + 2 * np.log(self.sigma))

    def grad_log_lik(self, u):
        return self.alpha * (self.x[..., None, :] - self.alpha * u) / self.sigma**2

    def terms(self, u):
        """``(log q, grad log q, ell, grad ell, grad log pi~)`` with ell = log pi~ + log lik - log q."""
        if self.need_grad:
            lpi, gpi = self.target.evaluate(u)
        else:
            lpi, gpi = self.target.evaluate(u, grad=False), None
        lq = self.q.logpdf(u)
        ell = lpi + self.log_lik(u) - lq
        if gpi is None:
            return lq, None, ell, None, None
        gq = self.q.grad_logpdf(u)
        return lq, gq, ell, gpi + self.grad_log_lik(u) - gq, gpi

    def annealed(self, beta):
        """Log-density of ``q^(1-beta) (pi~ lik)^beta`` with the raw terms as extras."""
        def fn(u):
            lq, gq, ell, gell, gpi = self.terms(u)
            return lq + beta * ell, gq + beta * gell, lq, gq, ell, gell, gpi
        return fn


def _finish(post, logw, log_marginal, u, gpi, config, acceptance):
    w_lse = log_sum_exp(logw, axis=-1)
    degenerate = ~np.isfinite(w_lse)
    safe = np.where(degenerate[..., None], 0.0, logw - np.where(degenerate, 0.0, w_lse)[..., None])
    wbar = np.exp(safe)
    score = combine_identity(config.identity, wbar, u, post.x, post.alpha, post.sigma,
                             target=post.target, grad_u=gpi)
    score = np.where(degenerate[..., None], 0.0, score)
    if config.score_clip is not None:
        score = clip_score(score, config.score_clip)
    log_marginal = np.where(degenerate, -np.inf, log_marginal)
    if config.log_marginal_clamp is not None:
        lo, hi = config.log_marginal_clamp
        log_marginal = np.clip(log_marginal, lo, hi)
    ess = np.where(degenerate, 0.0, 1.0 / sqnorm(wbar))
    return InnerEstimate(score, log_marginal, ess, acceptance, degenerate)


def _run(target, alpha, sigma, x_t, config: InnerConfig, rng: RngStream, n_steps, resample):
    x = np.atleast_2d(np.asarray(x_t, dtype=float))
    if sigma <= 0:
        raise ValueError("inner estimation needs sigma_t > 0 (t > 0)")
    need_grad = config.identity != "DSI" or n_steps > 1
    if need_grad and not getattr(target, "has_grad", True):
        raise ValueError("this inner configuration needs target gradients")
    q = inner_proposal(config.proposal, x, alpha, sigma, config.proposal_mean, config.proposal_var)
    post = _Posterior(target, x, alpha, sigma, q, need_grad)
    b, d = x.shape
    n = config.n_is
    u = q.sample(rng.child("inner_init").normal((b, n, d)))
    lq, gq, ell, gell, gpi = post.terms(u)
    betas = np.arange(n_steps + 1) / n_steps
    logw = betas[1] * ell
    log_marginal = np.zeros(b)
    acc_sum, acc_count = np.zeros(b), 0

    for k in range(1, n_steps):
        if resample:
            log_marginal += log_sum_exp(logw, axis=-1) - np.log(n)
            wn = np.exp(logw - log_sum_exp(logw, axis=-1)[:, None])
            idx = batched_systematic_resample(wn, rng.child("inner_resample", k).uniform(b))
            rows = np.arange(b)[:, None]
            u, lq, gq, ell, gell, gpi = (a[rows, idx] for a in (u, lq, gq, ell, gell, gpi))
            logw = np.zeros_like(logw)
        beta = betas[k]
        current = (lq + beta * ell, gq + beta * gell, lq, gq, ell, gell, gpi)
        mrng = rng.child("inner_mcmc", k)
        for _ in range(config.m_steps):
            u, accepted, current = mcmc_transition(config.kernel, post.annealed(beta), u,
                                                   config.delta_mcmc, mrng, current=current,
                                                   n_leapfrog=config.hmc_leapfrog)
            acc_sum += accepted.mean(axis=-1)
            acc_count += 1
        lq, gq, ell, gell, gpi = current[2:]
        logw = logw + (betas[k + 1] - beta) * ell

    log_marginal = log_marginal + log_sum_exp(logw, axis=-1) - np.log(n)
    acceptance = acc_sum / acc_count if acc_count else np.full(b, np.nan)
    est = _finish(post, logw, log_marginal, u, gpi, config, acceptance)
    if np.ndim(x_t) == 1:
        return InnerEstimate(est.score[0], est.log_marginal[0], est.ess[0],
                             est.acceptance[0], est.degenerate[0])
    return est


def is_estimate(target, alpha, sigma, x_t, config: InnerConfig, rng: RngStream) -> InnerEstimate:
    """Plain importance sampling of the denoising posterior.

    ``log w = log pi~(u) + log N(x | alpha u, sigma^2 I) - log q(u)``;
    ``log_marginal = lse(log w) - log n_is``.
    """
    return _run(target, alpha, sigma, x_t, config, rng, n_steps=1, resample=False)


def ais_estimate(target, alpha, sigma, x_t, config: InnerConfig, rng: RngStream) -> InnerEstimate:
    """Annealed importance sampling along ``q^(1-b) (pi~ lik)^b``, ``b_k = k / n_steps``.

    With ``config.estimator == "AIS_resample"`` the particles are resampled before
    every MCMC level and the marginal is the product of per-level mean weights.
    """
    return _run(target, alpha, sigma, x_t, config, rng, n_steps=config.n_steps,
                resample=config.estimator == "AIS_resample")


def estimate(target, alpha, sigma, x_t, config: InnerConfig, rng: RngStream) -> InnerEstimate:
    if config.estimator == "IS":
        return is_estimate(target, alpha, sigma, x_t, config, rng)
    return ais_estimate(target, alpha, sigma, x_t, config, rng)
