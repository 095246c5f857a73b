"""Particle bookkeeping: log-domain weights, ESS, resampling and RNG streams."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np


class DegenerateWeightsError(RuntimeError):
    """Raised when every weight of a particle system is zero (log-weight -inf)."""


# Fixed integer tags for the purpose slot of an RNG path.
PURPOSE = {
    "reference": 1,
    "propagate": 2,
    "resample": 3,
    "inner_init": 4,
    "inner_mcmc": 5,
    "inner_accept": 6,
    "inner_resample": 7,
    "baseline_init": 8,
    "baseline_mcmc": 9,
    "baseline_accept": 10,
    "baseline_resample": 11,
    "metric": 12,
    "target": 13,
    "split": 14,
}


class RngStream:
    """Counter-based random stream addressed by ``(root_seed, path)``.

    The stream is a Philox generator whose key is derived from the root seed and
    the integer path, so draws are a pure function of the address and the draw
    count. Distinct paths give independent streams.

    Parameters
    ----------
    root_seed : int
        Non-negative 64-bit seed.
    path : sequence of int or str
        Address below the root, e.g. ``(step, "propagate")``. Strings are mapped
        through :data:`PURPOSE`.
    """

    def __init__(self, root_seed: int, path: Sequence = ()):
        if root_seed < 0:
            raise ValueError("root_seed must be non-negative")
        self.root_seed = int(root_seed)
        self.path = tuple(_path_int(p) for p in path)
        ss = np.random.SeedSequence(self.root_seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, *path) -> "RngStream":
        return RngStream(self.root_seed, self.path + tuple(path))

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self.generator.random(size)

    def __repr__(self):
        return f"RngStream(root_seed={self.root_seed}, path={self.path})"


def _path_int(p) -> int:
    if isinstance(p, str):
        return PURPOSE[p]
    p = int(p)
    if p < 0:
        raise ValueError("RNG path entries must be non-negative")
    return p


def sqnorm(x) -> np.ndarray:
    """Squared Euclidean norm over the last axis (einsum is much faster than sum for small d)."""
    return np.einsum("...i,...i->...", x, x)


def log_sum_exp(values, axis=None) -> np.ndarray | float:
    """Stable ``log(sum(exp(values)))`` along ``axis``.

    Returns ``-inf`` when every input is ``-inf``.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    m = np.max(v, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - m_safe), axis=axis, keepdims=True)) + m_safe
    # +inf inputs propagate; all -inf rows give -inf via log(0).
    out = np.where(np.isposinf(m), np.inf, out)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def normalize_log_weights(log_weights, axis=-1) -> np.ndarray:
    """Return normalized weights ``exp(lw - lse(lw))``; raises if all are -inf."""
    lw = np.asarray(log_weights, dtype=float)
    if np.any(np.isnan(lw)):
        raise DegenerateWeightsError("NaN log-weight")
    lse = log_sum_exp(lw, axis=axis)
    if np.any(~np.isfinite(lse)):
        raise DegenerateWeightsError("all log-weights are -inf (or one is +inf)")
    return np.exp(lw - np.expand_dims(lse, axis))


def ess(normalized_weights) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(normalized_weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    s2 = np.sum(w * w)
    if s2 == 0.0:
        raise DegenerateWeightsError("all weights are zero")
    return float(np.sum(w) ** 2 / s2)


def ess_from_log_weights(log_weights, axis=-1):
    """ESS computed in the log domain; works on batches along ``axis``."""
    lw = np.asarray(log_weights, dtype=float)
    return np.exp(2.0 * log_sum_exp(lw, axis=axis) - log_sum_exp(2.0 * lw, axis=axis))


def _check_weights(w):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D sequence")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total == 0.0:
        raise DegenerateWeightsError("all weights are zero")
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"weights must sum to 1 (got {total!r})")
    return w


def systematic_resample(normalized_weights, u: float, n_out: int) -> np.ndarray:
    """Systematic resampling driven by a single uniform ``u`` in [0, 1).

    Grid points ``(u + k) / n_out`` are located in the cumulative weights.
    The returned indices are nondecreasing and index ``i`` appears either
    ``floor(n_out * w_i)`` or ``ceil(n_out * w_i)`` times.
    """
    w = _check_weights(normalized_weights)
    if not 0.0 <= u < 1.0:
        raise ValueError("u must lie in [0, 1)")
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    grid = (u + np.arange(n_out)) / n_out
    idx = np.searchsorted(cdf, grid, side="right")
    return np.minimum(idx, w.size - 1)


def multinomial_resample(normalized_weights, rng: RngStream, n_out: int) -> np.ndarray:
    """I.i.d. categorical ancestor draws, returned sorted."""
    w = _check_weights(normalized_weights)
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    # Sorted uniforms via normalized exponential spacings.
    e = -np.log1p(-rng.uniform(n_out + 1))
    grid = np.cumsum(e)[:-1] / np.sum(e)
    idx = np.searchsorted(cdf, grid, side="right")
    return np.minimum(idx, w.size - 1)


def batched_systematic_resample(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise systematic resampling of a ``(B, n)`` weight matrix.

    ``u`` holds one uniform per row. Returns ``(B, n)`` ancestor indices.
    """
    b, n = weights.shape
    cdf = np.cumsum(weights, axis=1)
    cdf[:, -1] = 1.0
    grid = (u[:, None] + np.arange(n)[None, :]) / n
    offset = 2.0 * np.arange(b)[:, None]
    idx = np.searchsorted((cdf + offset).ravel(), (grid + offset).ravel(), side="right")
    idx = idx.reshape(b, n) - n * np.arange(b)[:, None]
    return np.clip(idx, 0, n - 1)


def resample(normalized_weights, scheme: str, rng: RngStream, n_out: Optional[int] = None):
    """Dispatch to ``systematic`` or ``multinomial`` resampling."""
    n_out = len(normalized_weights) if n_out is None else n_out
    if scheme == "systematic":
        return systematic_resample(normalized_weights, float(rng.uniform()), n_out)
    if scheme == "multinomial":
        return multinomial_resample(normalized_weights, rng, n_out)
    raise ValueError(f"unknown resampling scheme {scheme!r}")


@dataclass
class ParticleSystem:
    """N weighted particles with cached score and log-marginal estimates."""

    positions: np.ndarray
    log_weights: np.ndarray
    scores: Optional[np.ndarray] = None
    log_marginals: Optional[np.ndarray] = None
    step_index: int = 0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        n, d = self.positions.shape
        if n < 1 or d < 1:
            raise ValueError("need N >= 1 and d >= 1")
        if self.log_weights.shape != (n,):
            raise ValueError("positions row count must equal log_weights length")
        if self.scores is not None and np.shape(self.scores) != (n, d):
            raise ValueError("scores must be N x d")
        if self.log_marginals is not None and np.shape(self.log_marginals) != (n,):
            raise ValueError("log_marginals must have length N")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def degenerate(self) -> bool:
        lw = self.log_weights
        return bool(np.any(np.isnan(lw)) or np.all(lw == -np.inf) or np.any(lw == np.inf))

    def normalized_weights(self) -> np.ndarray:
        return normalize_log_weights(self.log_weights)

    def ess(self) -> float:
        return ess(self.normalized_weights())

    def take(self, indices) -> "ParticleSystem":
        """Copy ancestors ``indices`` with all carried caches; weights reset to uniform."""
        indices = np.asarray(indices)
        return replace(
            self,
            positions=self.positions[indices],
            log_weights=np.zeros(indices.size),
            scores=None if self.scores is None else self.scores[indices],
            log_marginals=None if self.log_marginals is None else self.log_marginals[indices],
        )
