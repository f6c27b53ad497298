"""Lloyd-Max scalar quantizers: sample-trained and analytic (uniform / Gaussian)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtr, ndtri

from ..errors import DomainError, NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScalarCodebook:
    levels: np.ndarray  # (2^Q,) strictly increasing
    thresholds: np.ndarray  # (2^Q - 1,) midpoints of adjacent levels
    distortion: tuple = field(default=(), compare=False)  # per-iteration MSE trace

    @property
    def bits(self) -> int:
        return int(np.log2(self.levels.size))

    @classmethod
    def from_levels(cls, levels, distortion=()) -> "ScalarCodebook":
        levels = np.asarray(levels, dtype=float)
        return cls(levels, 0.5 * (levels[1:] + levels[:-1]), tuple(distortion))

    def scaled(self, s: float, shift: float = 0.0) -> "ScalarCodebook":
        return ScalarCodebook.from_levels(self.levels * s + shift)


def quantize(codebook: ScalarCodebook, x):
    """Nearest level via the thresholds; a value on a threshold goes to the lower cell."""
    x = np.asarray(x, dtype=float)
    idx = np.searchsorted(codebook.thresholds, x, side="left")
    return idx, codebook.levels[idx]


def _mse(x, codebook):
    return float(np.mean((x - quantize(codebook, x)[1]) ** 2))


def lloyd_max_train(samples, q_bits: int, max_iters: int = 200, tol: float = 1e-12) -> ScalarCodebook:
    """Alternate nearest-cell assignment and centroid updates from quantile starting levels.

    Stops once the distortion drop is below ``tol`` (relative to the first
    distortion). Raises :class:`NumericalError` if the distortion ever rises.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n_levels = 2**q_bits
    if q_bits < 1:
        raise DomainError("need at least one bit")
    if np.unique(x).size < n_levels:
        raise DomainError(f"need >= {n_levels} distinct samples for {q_bits} bits")
    levels = np.quantile(x, (np.arange(n_levels) + 0.5) / n_levels)
    levels = np.unique(levels)
    if levels.size < n_levels:  # heavy ties at quantiles: spread over sorted unique values
        u = np.unique(x)
        levels = u[np.linspace(0, u.size - 1, n_levels).round().astype(int)]
    cb = ScalarCodebook.from_levels(levels)
    trace = [_mse(x, cb)]
    scale = max(trace[0], 1e-300)
    for _ in range(max_iters):
        idx, _ = quantize(cb, x)
        sums = np.bincount(idx, weights=x, minlength=n_levels)
        counts = np.bincount(idx, minlength=n_levels)
        new = np.where(counts > 0, sums / np.maximum(counts, 1), cb.levels)
        new = np.sort(new)
        cb = ScalarCodebook.from_levels(new)
        d = _mse(x, cb)
        if d > trace[-1] * (1 + 1e-12) + 1e-300:
            raise NumericalError(f"Lloyd-Max distortion rose from {trace[-1]:.6g} to {d:.6g}")
        trace.append(d)
        if trace[-2] - d < tol * scale:
            break
    if np.any(np.diff(cb.levels) <= 0):
        raise NumericalError("Lloyd-Max produced coincident levels")
    return ScalarCodebook(cb.levels, cb.thresholds, tuple(trace))


def uniform_codebook(q_bits: int, low: float, high: float) -> ScalarCodebook:
    """MSE-optimal quantizer of Uniform(low, high): cell midpoints."""
    n = 2**q_bits
    step = (high - low) / n
    return ScalarCodebook.from_levels(low + step * (np.arange(n) + 0.5))


@lru_cache(maxsize=None)
def _gaussian_levels(q_bits: int, iters: int) -> np.ndarray:
    n = 2**q_bits
    # companding start: optimal point density ~ p^(1/3), i.e. N(0, 3) quantiles
    levels = np.sqrt(3.0) * ndtri((np.arange(n) + 0.5) / n)
    for _ in range(iters):
        t = np.concatenate(([-np.inf], 0.5 * (levels[1:] + levels[:-1]), [np.inf]))
        pdf = np.exp(-0.5 * t**2) / np.sqrt(2 * np.pi)
        mass = ndtr(t[1:]) - ndtr(t[:-1])
        levels = np.where(mass > 0, (pdf[:-1] - pdf[1:]) / np.maximum(mass, 1e-300), levels)
    return levels


def gaussian_codebook(q_bits: int, std: float = 1.0, iters: int = 300) -> ScalarCodebook:
    """Lloyd-Max quantizer of N(0, std^2) from the exact conditional-mean iteration (cached)."""
    return ScalarCodebook.from_levels(_gaussian_levels(q_bits, iters) * std)
