"""Structural comparison between cumulative noise PTMs and NNAS surrogates."""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)

ENTROPY_CAP = math.log(1e12)


def sum_pool(matrix: np.ndarray, window: int) -> np.ndarray:
    """Non-overlapping ``window x window`` block sums."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] % window or m.shape[1] % window:
        raise ValueError(f"matrix of shape {m.shape} is not divisible by window {window}")
    r, c = m.shape[0] // window, m.shape[1] // window
    return m.reshape(r, window, c, window).sum(axis=(1, 3))


def _normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def rank_correlation(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation of the ranks; NaN if either input is constant."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def spearman_matrix(surrogate: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Rank correlation of ``N̂ᵀN̂`` against every matching window of ``matrix``.

    ``surrogate`` is the length-``d`` vector N̂. The matrix is tiled into
    non-overlapping ``d x d`` windows; entry ``(a, b)`` compares window
    ``(a, b)`` (flattened, normalized) with the flattened normalized
    outer product. Constant windows give NaN.
    """
    v = np.asarray(surrogate, dtype=float).ravel()
    d = v.size
    outer = _normalize(np.outer(v, v).ravel())
    m = np.asarray(matrix, dtype=float)
    if m.shape[0] % d or m.shape[1] % d:
        raise ValueError(f"matrix of shape {m.shape} cannot be tiled by {d}x{d} windows")
    rows, cols = m.shape[0] // d, m.shape[1] // d
    out = np.empty((rows, cols))
    for a in range(rows):
        for b in range(cols):
            window = _normalize(m[a * d : (a + 1) * d, b * d : (b + 1) * d].ravel())
            out[a, b] = rank_correlation(window, outer)
    return out


def window_length(n: int) -> int:
    """Spacing window ``m = floor(sqrt(n) + 1/2)``."""
    return max(1, int(math.floor(math.sqrt(n) + 0.5)))


def _spacings(x: np.ndarray, m: int) -> np.ndarray:
    n = x.size
    idx = np.arange(n)
    return x[np.minimum(idx + m, n - 1)] - x[np.maximum(idx - m, 0)]


def differential_entropy(samples, method: str = "auto") -> tuple[float, bool]:
    """Spacing estimate of differential entropy (nats).

    ``auto`` uses Ebrahimi's boundary-corrected estimator below 1000 samples
    and Vasicek's above. Returns ``(value, flagged)``; ``flagged`` marks a
    constant sample (value capped at ``-ln(1e12)``) or tied samples whose
    zero spacings were floored.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 10:
        raise ValueError("need at least 10 samples")
    if method == "auto":
        method = "ebrahimi" if n < 1000 else "vasicek"
    if method not in ("vasicek", "ebrahimi"):
        raise ValueError(f"unknown entropy method {method!r}")
    spread = x[-1] - x[0]
    if spread == 0:
        return -ENTROPY_CAP, True
    m = window_length(n)
    if m >= n / 2:
        m = max(1, n // 2 - 1)
    diff = _spacings(x, m)
    floor = spread * 1e-12
    flagged = bool(np.any(diff < floor))
    diff = np.maximum(diff, floor)
    if method == "vasicek":
        value = float(np.mean(np.log(n / (2.0 * m) * diff)))
    else:
        i = np.arange(1, n + 1)
        c = np.full(n, 2.0)
        c[i <= m] = 1.0 + (i[i <= m] - 1) / m
        c[i >= n - m + 1] = 1.0 + (n - i[i >= n - m + 1]) / m
        value = float(np.mean(np.log(n / (c * m) * diff)))
    return max(value, -ENTROPY_CAP), flagged


def entropy_curve(snapshots, method: str = "auto") -> tuple[np.ndarray, bool]:
    values, flags = zip(*(differential_entropy(s, method) for s in snapshots))
    return np.array(values), any(flags)


def curve_correlation(a, b) -> tuple[float, float]:
    """``(pearson, spearman)`` between two curves; NaN when either is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size != b.size:
        raise ValueError("curves differ in length")
    if a.size < 3:
        raise ValueError("need at least three points")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan"), float("nan")
    return float(np.corrcoef(a, b)[0, 1]), rank_correlation(a, b)


def entropy_correspondence(surrogates, ptms) -> tuple[float, float, bool]:
    """Correlate the entropy curves of N̂ vectors and flattened PTMs across layers.

    Returns ``(pearson, spearman, flagged)``.
    """
    if len(surrogates) != len(ptms):
        raise ValueError("need one surrogate per PTM")
    h_s, f_s = entropy_curve([np.ravel(s) for s in surrogates])
    h_p, f_p = entropy_curve([np.ravel(p) for p in ptms])
    pearson, spearman = curve_correlation(h_s, h_p)
    flagged = f_s or f_p or math.isnan(pearson)
    return pearson, spearman, flagged
