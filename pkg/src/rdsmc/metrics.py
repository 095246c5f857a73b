"""Sample-quality and normalizing-constant metrics."""

from __future__ import annotations

import numpy as np

from .core import RngStream
from .targets import GmmTarget, LogRegTarget


def _norm_weights(weights, n):
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape != (n,):
        raise ValueError("one weight per sample is required")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("total weight is zero")
    return w / total


def gmm_weight_ratio_bias(samples, weights, gmm: GmmTarget, component: int = 0) -> float:
    """``|w^_k - w_k|`` where ``w^_k`` is the weighted share of samples whose most
    probable component (by ``w_j N(x | m_j, s^2 I)``) is ``k``."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[1] != gmm.dim:
        raise ValueError("sample dimension does not match the mixture")
    w = _norm_weights(weights, x.shape[0])
    assign = np.argmax(gmm.component_log_probs(x), axis=-1)
    share = float(np.sum(w[assign == component]))
    return abs(share - float(gmm.weights[component]))


def histogram_tvd(samples_a, samples_b, weights_a=None, weights_b=None, bins: int = 256,
                  range=(0.0, 8.0)) -> float:
    """Total variation ``0.5 sum |mu_i - nu_i|`` between weighted 1-D histograms.

    Values outside ``range`` are counted in the first or last bin.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = float(range[0]), float(range[1])
    if not hi > lo:
        raise ValueError("range must be increasing")

    def masses(s, w):
        s = np.asarray(s, dtype=float).reshape(-1)
        w = _norm_weights(w, s.size)
        idx = np.clip(np.floor((s - lo) / (hi - lo) * bins).astype(np.int64), 0, bins - 1)
        return np.bincount(idx, weights=w, minlength=bins)

    return float(0.5 * np.sum(np.abs(masses(samples_a, weights_a) - masses(samples_b, weights_b))))


def weighted_ks(a, b, weights_a=None, weights_b=None) -> float:
    """Two-sample Kolmogorov-Smirnov distance between weighted 1-D empirical CDFs."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    wa, wb = _norm_weights(weights_a, a.size), _norm_weights(weights_b, b.size)
    ia, ib = np.argsort(a, kind="stable"), np.argsort(b, kind="stable")
    a, wa, b, wb = a[ia], wa[ia], b[ib], wb[ib]
    ca = np.concatenate([[0.0], np.cumsum(wa)])
    cb = np.concatenate([[0.0], np.cumsum(wb)])
    grid = np.concatenate([a, b])
    # right-continuous CDFs evaluated at every jump point
    fa = ca[np.searchsorted(a, grid, side="right")]
    fb = cb[np.searchsorted(b, grid, side="right")]
    return float(np.max(np.abs(fa - fb)))


def sliced_ksd(samples, reference_samples, weights=None, reference_weights=None,
               n_projections: int = 128, rng: RngStream | None = None, seed: int = 0) -> float:
    """Mean weighted KS distance over random one-dimensional projections."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    y = np.atleast_2d(np.asarray(reference_samples, dtype=float))
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("both sample sets must be nonempty")
    if x.shape[1] != y.shape[1]:
        raise ValueError("dimension mismatch")
    if n_projections < 1:
        raise ValueError("n_projections must be >= 1")
    rng = RngStream(seed, ("metric",)) if rng is None else rng
    dirs = rng.normal((n_projections, x.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    px, py = x @ dirs.T, y @ dirs.T
    return float(np.mean([weighted_ks(px[:, k], py[:, k], weights, reference_weights)
                          for k in np.arange(n_projections)]))


def predictive_log_likelihood(posterior_samples, weights, X_test, y_test,
                              model: LogRegTarget | None = None) -> float:
    """Weighted mean over samples of ``log p(theta) + sum_j log p(y_j | x_j, theta)``."""
    theta = np.atleast_2d(np.asarray(posterior_samples, dtype=float))
    X = np.asarray(X_test, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, theta.shape[1] - 1) if X.size else np.zeros((0, theta.shape[1] - 1))
    y = np.asarray(y_test, dtype=float).reshape(-1)
    if X.shape[1] + 1 != theta.shape[1]:
        raise ValueError("parameter dimension does not match the feature count")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X_test and y_test row counts differ")
    model = LogRegTarget(np.zeros((0, X.shape[1])), np.zeros(0)) if model is None else model
    w = _norm_weights(weights, theta.shape[0])
    per_sample = model.log_prior(theta)
    if X.shape[0]:
        per_sample = per_sample + np.sum(model.pointwise_log_lik(theta, X, y), axis=-1)
    return float(np.sum(w * per_sample))


def logz_bias(log_Z_hat: float, true_log_Z: float) -> float:
    """``|log Z^ - log Z|``."""
    if not (np.isfinite(log_Z_hat) and np.isfinite(true_log_Z)):
        raise ValueError("both log normalizers must be finite")
    return abs(float(log_Z_hat) - float(true_log_Z))


def z_bias(log_Z_hat: float, true_log_Z: float) -> float:
    """``|Z^ - Z|`` on the natural scale."""
    return abs(float(np.exp(log_Z_hat)) - float(np.exp(true_log_Z)))


def radius(samples):
    return np.linalg.norm(np.atleast_2d(samples), axis=-1)


def angle(samples):
    x = np.atleast_2d(samples)
    return np.arctan2(x[:, 1], x[:, 0])
