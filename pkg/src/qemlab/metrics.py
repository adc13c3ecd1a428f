"""Error metrics for mitigated sequences and metrology scaling fits."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

RD_CAP = math.log(1e12)


def _as_sequences(x) -> list[np.ndarray]:
    if isinstance(x, np.ndarray) and x.ndim <= 2:
        return [np.atleast_1d(row).astype(float) for row in np.atleast_2d(x)]
    return [np.asarray(s, dtype=float).ravel() for s in x]


def mae(pred, truth, mode: str = "point") -> float:
    """Mean absolute error over one or many (possibly ragged) sequences.

    ``point`` averages ``|ŷ_l - y_l|`` over every (sequence, layer) pair.
    ``seq_norm`` averages ``||ŷ - y||_2 / sqrt(L)`` over sequences, so the
    two coincide when the error is constant within each sequence.
    """
    ps, ts = _as_sequences(pred), _as_sequences(truth)
    if len(ps) != len(ts) or any(p.shape != t.shape for p, t in zip(ps, ts)):
        raise ValueError("prediction and truth lengths differ")
    if not ps:
        raise ValueError("no sequences to score")
    if mode == "point":
        err = np.concatenate([np.abs(p - t) for p, t in zip(ps, ts)])
        return float(err.mean())
    if mode == "seq_norm":
        return float(np.mean([np.linalg.norm(p - t) / math.sqrt(p.size) for p, t in zip(ps, ts)]))
    raise ValueError(f"unknown MAE mode {mode!r}")


def rd(noisy_error: float, mitigated_error: float) -> tuple[float, bool]:
    """``ln(noisy_error / mitigated_error)``; larger is better.

    Returns ``(value, capped)``. Zero errors map to ``±ln(1e12)`` with ``capped`` set.
    """
    if noisy_error < 0 or mitigated_error < 0:
        raise ValueError("errors must be non-negative")
    if mitigated_error == 0 and noisy_error == 0:
        return 0.0, True
    if mitigated_error == 0:
        return RD_CAP, True
    if noisy_error == 0:
        return -RD_CAP, True
    value = math.log(noisy_error / mitigated_error)
    if abs(value) > RD_CAP:
        return math.copysign(RD_CAP, value), True
    return value, False


def rd_sequences(noisy, mitigated, truth) -> tuple[float, bool]:
    return rd(mae(noisy, truth), mae(mitigated, truth))


def theta_estimate(expectation, n: int):
    """``arccos(<X^n>) / n`` with the expectation clamped into [-1, 1]."""
    return np.arccos(np.clip(expectation, -1.0, 1.0)) / n


def rmse_theta(estimates, theta: float) -> float:
    estimates = np.asarray(estimates, dtype=float)
    return float(np.sqrt(np.mean((estimates - theta) ** 2)))


def fit_rate(ns: Sequence[float], values: Sequence[float], noiseless_values: Sequence[float]) -> tuple[float, float]:
    """Fit ``b_0 / n^r`` to ``values`` with ``b_0`` taken from the noiseless curve.

    ``b_0`` is the least-squares fit of ``noiseless_values`` to ``b_0 / n^2``;
    ``r`` is then the log-space least-squares slope with ``b_0`` held fixed.
    Returns ``(b_0, r)``.
    """
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    clean = np.asarray(noiseless_values, dtype=float)
    if ns.size < 2 or values.shape != ns.shape or clean.shape != ns.shape:
        raise ValueError("need at least two matching points")
    if np.any(values <= 0) or np.any(clean <= 0):
        raise ValueError("scaling curves must be positive")
    basis = ns**-2.0
    b0 = float(np.dot(clean, basis) / np.dot(basis, basis))
    logn = np.log(ns)
    r = float(np.dot(math.log(b0) - np.log(values), logn) / np.dot(logn, logn))
    return b0, r


def bootstrap_ci(values, resamples: int = 1000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("no values")
    rng = np.random.default_rng(seed)
    means = values[rng.integers(0, values.size, size=(resamples, values.size))].mean(axis=1)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [tail, 1.0 - tail])
    return float(lo), float(hi)


@dataclass
class MetricReport:
    model: str
    noise_level: float
    bucket: str
    sequences: int
    mae_point: float
    mae_seq_norm: float
    rd_point: float
    ci_low: float
    ci_high: float
    overhead: int
    rmse_theta: Optional[float] = None
    fit_rate_r: Optional[float] = None
    flags: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("mae_point", "mae_seq_norm", "rd_point"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mae_point < 0 or self.mae_seq_norm < 0:
            raise ValueError("MAE must be non-negative")

    def to_row(self) -> dict:
        row = asdict(self)
        row["flags"] = ";".join(self.flags)
        return row


def score_sequences(
    model: str,
    noise_level: float,
    bucket: str,
    pred,
    noisy,
    truth,
    overhead: int,
    seed: int = 0,
) -> MetricReport:
    pred_s, noisy_s, truth_s = _as_sequences(pred), _as_sequences(noisy), _as_sequences(truth)
    point = mae(pred_s, truth_s)
    value, capped = rd(mae(noisy_s, truth_s), point)
    per_point = np.concatenate([np.abs(p - t) for p, t in zip(pred_s, truth_s)])
    lo, hi = bootstrap_ci(per_point, seed=seed)
    return MetricReport(
        model=model,
        noise_level=noise_level,
        bucket=bucket,
        sequences=len(pred_s),
        mae_point=point,
        mae_seq_norm=mae(pred_s, truth_s, "seq_norm"),
        rd_point=value,
        ci_low=lo,
        ci_high=hi,
        overhead=overhead,
        flags=["rd_capped"] if capped else [],
    )
