"""Unnormalized target densities, their gradients and dataset ingestion."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import special

from .core import RngStream, log_sum_exp, sqnorm

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


class Target:
    """Base class for an unnormalized density ``pi~(x)`` on R^d.

    Subclasses implement :meth:`log_prob_and_grad` on arrays of shape ``(..., d)``.
    ``log_Z`` is the exact log normalization constant when known.
    """

    dim: int
    log_Z: Optional[float] = None
    has_grad: bool = True
    # rows of x evaluated per vectorized call; bounds temporary memory
    chunk_rows: int = 1 << 18

    def log_prob_and_grad(self, x):
        raise NotImplementedError

    def log_prob(self, x):
        return self.log_prob_and_grad(x)[0]

    def grad_log_prob(self, x):
        return self.log_prob_and_grad(x)[1]

    def evaluate(self, x, grad: bool = True):
        """Chunked evaluation over the leading axes of ``x``.

        Results do not depend on the chunk size: every row is computed by the
        same row-local arithmetic.
        """
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        flat = x.reshape(-1, self.dim)
        n = flat.shape[0]
        lp = np.empty(n)
        gr = np.empty((n, self.dim)) if grad else None
        step = max(1, int(self.chunk_rows))
        for s in range(0, n, step):
            if grad:
                lp[s : s + step], gr[s : s + step] = self.log_prob_and_grad(flat[s : s + step])
            else:
                lp[s : s + step] = self.log_prob(flat[s : s + step])
        lp = lp.reshape(lead)
        return (lp, gr.reshape(lead + (self.dim,))) if grad else lp

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no exact sampler")


def target_logpdf_and_grad(target: Target, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != target.dim:
        raise ValueError(f"expected dimension {target.dim}, got {x.shape[-1]}")
    return target.log_prob_and_grad(x)


def _gauss(x, mean, var):
    r = x - mean
    return -0.5 * sqnorm(r) / var - 0.5 * x.shape[-1] * (LOG_2PI + np.log(var))


class GaussianTarget(Target):
    """``scale * N(mean, std^2 I)``; ``log_Z = log(scale)``."""

    def __init__(self, mean, std: float = 1.0, scale: float = 1.0):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.dim = self.mean.size
        self.std = float(std)
        self.log_scale = float(np.log(scale))
        self.log_Z = self.log_scale

    def log_prob_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        var = self.std**2
        return self.log_scale + _gauss(x, self.mean, var), (self.mean - x) / var

    def sample(self, rng, n):
        return self.mean + self.std * rng.normal((n, self.dim))

    def noised_log_marginal(self, x, alpha, sigma):
        """``log Z p_t(x)`` for the forward kernel ``N(alpha x0, sigma^2 I)``."""
        var = alpha**2 * self.std**2 + sigma**2
        return self.log_scale + _gauss(np.asarray(x, float), alpha * self.mean, var)

    def noised_score(self, x, alpha, sigma):
        var = alpha**2 * self.std**2 + sigma**2
        return (alpha * self.mean - np.asarray(x, float)) / var

    def posterior(self, x, alpha, sigma):
        """Mean and variance of ``p(x0 | x_t)`` (isotropic)."""
        prec = 1.0 / self.std**2 + alpha**2 / sigma**2
        var = 1.0 / prec
        mean = var * (self.mean / self.std**2 + alpha * np.asarray(x, float) / sigma**2)
        return mean, var


class GmmTarget(Target):
    """Isotropic Gaussian mixture ``sum_k w_k N(m_k, variance I)``; ``log_Z = 0``."""

    def __init__(self, means, variance: float = 2.0 * np.log(2.0), weights=(0.1, 0.9), seed=None):
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.dim = self.means.shape[1]
        self.variance = float(variance)
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (self.means.shape[0],):
            raise ValueError("one weight per component is required")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        self.log_weights = np.log(self.weights)
        self._comp_const = (self.log_weights - 0.5 * np.sum(self.means**2, axis=1) / self.variance
                            - 0.5 * self.dim * (LOG_2PI + np.log(self.variance)))
        self.seed = seed
        self.log_Z = 0.0

    def component_log_probs(self, x):
        """``log w_k + log N(x | m_k, variance I)`` with shape ``(..., K)``."""
        x = np.asarray(x, dtype=float)
        return self.log_weights + _gauss(x[..., None, :], self.means, self.variance)

    def log_prob_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        # expanded quadratic form: one matmul instead of a (.., K, d) difference tensor
        comp = self._comp_const + (x @ self.means.T - 0.5 * sqnorm(x)[..., None]) / self.variance
        # reductions over the short component axis, written as loops (numpy is slow there)
        cols = [comp[..., k] for k in range(comp.shape[-1])]
        top = cols[0]
        for c in cols[1:]:
            top = np.maximum(top, c)
        e = [np.exp(c - top) for c in cols]
        tot = e[0]
        for v in e[1:]:
            tot = tot + v
        lp = top + np.log(tot)
        mean = sum(v[..., None] * m for v, m in zip(e, self.means)) / tot[..., None]
        return lp, (mean - x) / self.variance

    def sample(self, rng, n):
        k = np.searchsorted(np.cumsum(self.weights), rng.uniform(n), side="right")
        k = np.minimum(k, len(self.weights) - 1)
        return self.means[k] + np.sqrt(self.variance) * rng.normal((n, self.dim))

    def noised_log_marginal(self, x, alpha, sigma):
        var = alpha**2 * self.variance + sigma**2
        x = np.asarray(x, dtype=float)
        comp = self.log_weights + _gauss(x[..., None, :], alpha * self.means, var)
        return log_sum_exp(comp, axis=-1)

    def annealing_scale(self):
        """``(R, tau)`` used to size the annealing baselines' initial Gaussian."""
        return 0.9 * float(np.linalg.norm(self.means[0] - self.means[1])), float(np.sqrt(self.variance))


def gmm_generate(d: int, box_width: float = 80.0, seed: int = 0, weights=(0.1, 0.9),
                 variance: float = 2.0 * np.log(2.0)) -> GmmTarget:
    """Two-component mixture with means drawn uniformly in ``[-w/2, w/2]^d``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = RngStream(seed, ("target",))
    means = (rng.uniform((len(weights), d)) - 0.5) * box_width
    return GmmTarget(means, variance=variance, weights=weights, seed=seed)


class RingsTarget(Target):
    """Inverse-polar target: radius ~ equal mixture of N(k, 0.15^2), k = 1..4; angle uniform.

    The Cartesian density is ``p_r(r) / (2 pi r)`` with ``r = |x|``.
    """

    dim = 2
    log_Z = 0.0

    def __init__(self, radii=(1.0, 2.0, 3.0, 4.0), radius_std: float = 0.15):
        self.radii = np.asarray(radii, dtype=float)
        self.radius_std = float(radius_std)
        self.log_mix = -np.log(len(self.radii))

    def radius_log_prob_and_grad(self, r):
        r = np.asarray(r, dtype=float)
        s2 = self.radius_std**2
        # a loop over the few rings is faster than reductions along a short axis
        cols = [-0.5 * (r - c) ** 2 / s2 for c in self.radii]
        top = cols[0]
        for c in cols[1:]:
            top = np.maximum(top, c)
        e = [np.exp(c - top) for c in cols]
        tot, num = e[0], e[0] * (self.radii[0] - r)
        for v, c in zip(e[1:], self.radii[1:]):
            tot = tot + v
            num = num + v * (c - r)
        lp = top + np.log(tot) + self.log_mix - 0.5 * np.log(2 * np.pi * s2)
        return lp, num / tot / s2

    def log_prob_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(sqnorm(x))
        with np.errstate(divide="ignore", invalid="ignore"):
            lpr, dlpr = self.radius_log_prob_and_grad(r)
            lp = lpr - np.log(2.0 * np.pi) - np.log(r)
            grad = ((dlpr - 1.0 / r) / r)[..., None] * x
        lp = np.where(r > 0, lp, -np.inf)
        grad = np.where((r > 0)[..., None], grad, np.nan)
        return lp, grad

    def sample_radius(self, rng, n):
        k = np.floor(rng.uniform(n) * len(self.radii)).astype(int)
        r = self.radii[k] + self.radius_std * rng.normal(n)
        bad = r <= 0
        while np.any(bad):
            r[bad] = self.radii[k[bad]] + self.radius_std * rng.normal(int(bad.sum()))
            bad = r <= 0
        return r

    def sample(self, rng, n):
        r = self.sample_radius(rng, n)
        theta = 2.0 * np.pi * rng.uniform(n)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def annealing_scale(self):
        return 4.0, 0.15


class FunnelTarget(Target):
    """``N(x1; 0, 9) N(x_{2:d}; 0, exp(x1) I)``; ``log_Z = 0``."""

    log_Z = 0.0

    def __init__(self, dim: int = 10, scale_variance: float = 9.0):
        if dim < 2:
            raise ValueError("funnel needs d >= 2")
        self.dim = int(dim)
        self.scale_variance = float(scale_variance)

    def log_prob_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        x1, rest = x[..., 0], x[..., 1:]
        k = self.dim - 1
        sq = sqnorm(rest)
        inv = np.exp(-x1)
        lp = (-0.5 * x1**2 / self.scale_variance - 0.5 * np.log(2 * np.pi * self.scale_variance)
              - 0.5 * sq * inv - 0.5 * k * (LOG_2PI + x1))
        g1 = -x1 / self.scale_variance + 0.5 * sq * inv - 0.5 * k
        grad = np.concatenate([g1[..., None], -rest * inv[..., None]], axis=-1)
        return lp, grad

    def sample(self, rng, n):
        x1 = np.sqrt(self.scale_variance) * rng.normal(n)
        rest = np.exp(0.5 * x1)[:, None] * rng.normal((n, self.dim - 1))
        return np.concatenate([x1[:, None], rest], axis=1)

    def annealing_scale(self):
        return 2.12, 0.0


class LogRegTarget(Target):
    """Posterior of Bayesian logistic regression with parameters ``(w, b)``.

    Prior ``N(w; 0, I) N(b; 0, 2.5^2)``; likelihood ``Bernoulli(y; sigmoid(x.w + b))``.
    """

    prior_bias_std = 2.5

    def __init__(self, X, y):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y row counts differ")
        self.dim = self.X.shape[1] + 1
        self.signs = 2.0 * self.y - 1.0
        self.log_Z = None
        # keeps the (rows x data) logit matrix around 2e7 entries
        self.chunk_rows = max(1024, int(2e7 // max(1, self.X.shape[0])))

    def log_prior_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        w, b = theta[..., :-1], theta[..., -1]
        s2 = self.prior_bias_std**2
        lp = (-0.5 * sqnorm(w) - 0.5 * b * b / s2
              - 0.5 * (self.dim - 1) * LOG_2PI - 0.5 * np.log(2 * np.pi * s2))
        grad = np.concatenate([-w, (-b / s2)[..., None]], axis=-1)
        return lp, grad

    def log_prior(self, theta):
        return self.log_prior_and_grad(theta)[0]

    def pointwise_log_lik(self, theta, X=None, y=None):
        """``log p(y_j | x_j; theta)`` with shape ``(..., M)``."""
        X = self.X if X is None else np.atleast_2d(np.asarray(X, dtype=float))
        signs = self.signs if y is None else 2.0 * np.asarray(y, dtype=float) - 1.0
        theta = np.asarray(theta, dtype=float)
        z = theta[..., :-1] @ X.T + theta[..., -1:]
        return -np.logaddexp(0.0, -signs * z)

    def log_prob_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        lp, grad = self.log_prior_and_grad(theta)
        if self.X.shape[0] == 0:
            return lp, grad
        z = theta[..., :-1] @ self.X.T + theta[..., -1:]
        sz = self.signs * z
        lp = lp - np.sum(np.logaddexp(0.0, -sz), axis=-1)
        # d/dz log sigmoid(s z) = s * sigmoid(-s z)
        r = self.signs * special.expit(-sz)
        gw = r @ self.X
        gb = np.sum(r, axis=-1)
        return lp, grad + np.concatenate([gw, gb[..., None]], axis=-1)

    def annealing_scale(self):
        return 2.5, 0.0


@dataclass
class Split:
    X: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.X.shape[0]


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def _read_table(path: Path):
    text = path.read_text()
    dialect = csv.Sniffer().sniff(text[:4096], delimiters=",;\t ")
    rows = [r for r in csv.reader(text.splitlines(), dialect) if any(c.strip() for c in r)]
    rows = [[c.strip() for c in r if c.strip() != ""] for r in rows]
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    if not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]  # header row
    if not rows or len(rows[0]) < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")
    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ValueError(f"{path}: row {i} has {len(r)} cells, expected {width}")
        try:
            data[i] = [float(c) for c in r]
        except ValueError as err:
            raise ValueError(f"{path}: non-numeric cell in row {i}") from err
    return data


def load_dataset(path, split_seed: int = 0, fractions=(0.6, 0.2)):
    """Read a numeric table (last column = 0/1 label) and split 60/20/20.

    Features are standardized with mean and standard deviation computed on the
    training split; constant training columns are left unscaled (centered only)
    with a warning.

    Returns
    -------
    train, validation, test : Split
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    data = _read_table(path)
    X, y = data[:, :-1], data[:, -1]
    if not np.all((y == 0) | (y == 1)):
        raise ValueError(f"{path}: last column must hold binary 0/1 labels")
    n = X.shape[0]
    perm = RngStream(split_seed, ("split",)).generator.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    idx_tr, idx_va, idx_te = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    mu = X[idx_tr].mean(axis=0)
    sd = X[idx_tr].std(axis=0)
    const = sd == 0
    if np.any(const):
        logger.warning("%s: %d constant feature column(s) not scaled", path.name, int(const.sum()))
        sd = np.where(const, 1.0, sd)
    Z = (X - mu) / sd
    return tuple(Split(Z[i], y[i]) for i in (idx_tr, idx_va, idx_te))
