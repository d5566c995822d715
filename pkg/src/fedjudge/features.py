"""Gradient-trace featurization: nine per-batch statistics, five-stat summary.

Every batch gradient is reduced to nine numbers (mean, std, min, max, range,
skew, kurtosis, L1, L2 over its coordinates). The per-batch streams are then
summarized with mean/std/min/max/range across batches, giving a fixed
45-dimensional vector in stat-major order:

    [mean_of_mean, std_of_mean, min_of_mean, max_of_mean, range_of_mean,
     mean_of_std, ...]

Conventions: "std" is the sample standard deviation (divisor n-1, zero for a
single element); skew and kurtosis use population central moments with excess
kurtosis, and both are defined as 0 when the second moment is below 1e-12.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .nn import GradTrace

STAT_NAMES = ("mean", "std", "min", "max", "range", "skew", "kurtosis", "l1", "l2")
SUMMARY_NAMES = ("mean", "std", "min", "max", "range")
FEATURE_DIM = len(STAT_NAMES) * len(SUMMARY_NAMES)

_MOMENT_FLOOR = 1e-12


@dataclass(frozen=True)
class BatchStats9:
    mean: float
    std: float
    min: float
    max: float
    range: float
    skew: float
    kurtosis: float
    l1: float
    l2: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in STAT_NAMES])


def _sample_std(values: np.ndarray) -> float:
    if values.size <= 1:
        return 0.0
    return float(values.std(ddof=1))


def batch_stats9(grad: np.ndarray) -> BatchStats9:
    """Nine coordinate statistics of one flat gradient vector."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.ndim != 1 or grad.size == 0:
        raise InputError("gradient must be a non-empty 1-D vector")
    lo = float(grad.min())
    hi = float(grad.max())
    centered = grad - grad.mean()
    m2 = float((centered ** 2).mean())
    if m2 < _MOMENT_FLOOR:
        skew = 0.0
        kurt = 0.0
    else:
        skew = float((centered ** 3).mean() / m2 ** 1.5)
        kurt = float((centered ** 4).mean() / m2 ** 2 - 3.0)
    return BatchStats9(
        mean=float(grad.mean()),
        std=_sample_std(grad),
        min=lo,
        max=hi,
        range=hi - lo,
        skew=skew,
        kurtosis=kurt,
        l1=float(np.abs(grad).sum()),
        l2=float(np.linalg.norm(grad)),
    )


def five_stat_summary(per_batch: list[BatchStats9]) -> np.ndarray:
    """Summarize each statistic stream across batches; 45 values, stat-major."""
    if not per_batch:
        raise InputError("need at least one batch of statistics")
    rows = np.stack([s.as_array() for s in per_batch])  # (batches, 9)
    out = np.empty(FEATURE_DIM)
    for j in range(rows.shape[1]):
        col = rows[:, j]
        lo = float(col.min())
        hi = float(col.max())
        out[5 * j:5 * j + 5] = (float(col.mean()), _sample_std(col), lo, hi, hi - lo)
    return out


def features_from_trace(trace: GradTrace) -> np.ndarray:
    """45-dim feature of a gradient trace: stats per batch, then the summary."""
    return five_stat_summary([batch_stats9(g) for g in trace])


def feature_to_bytes(feature: np.ndarray) -> bytes:
    """45 little-endian float64 values, used in digests and fixtures."""
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (FEATURE_DIM,):
        raise InputError(f"feature must have exactly {FEATURE_DIM} entries")
    return feature.astype("<f8").tobytes()


def feature_from_bytes(raw: bytes) -> np.ndarray:
    if len(raw) != 8 * FEATURE_DIM:
        raise InputError("feature blob has the wrong length")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def matrix_to_bytes(rows: np.ndarray) -> bytes:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != FEATURE_DIM:
        raise InputError(f"feature matrix must be (n, {FEATURE_DIM})")
    return struct.pack("<Q", rows.shape[0]) + rows.astype("<f8").tobytes()
