"""Reconstruction-quality metrics and aggregate evaluation.

Rates use strict "<" against the thresholds.  Exact-zero MSE maps to an
infinite PSNR, serialized as the string "inf" and clamped to 150 dB when
averaging so that a handful of perfect recoveries cannot dominate the
mean in a misleading way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import DimensionError

PSNR_CLAMP_DB = 150.0


@dataclass
class EvalThresholds:
    accurate_mse: float = 1e-7
    approximate_mse: float = 5e-4

    def __post_init__(self):
        if not 0 < self.accurate_mse < self.approximate_mse:
            raise ValueError("need 0 < accurate_mse < approximate_mse")


@dataclass
class SampleRecord:
    sample_id: int
    mse: float
    psnr_db: float
    accurate: bool
    approximate: bool


@dataclass
class EvalSummary:
    accurate_rate: float  # percent
    approximate_rate: float  # percent
    average_psnr: float  # dB, with inf entries clamped before averaging
    records: list[SampleRecord] = field(default_factory=list)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.mean(diff * diff))


def psnr(mse_value: float) -> float:
    """PSNR in dB for pixel values in [0, 1]: 10 log10(1 / MSE)."""
    if mse_value < 0:
        raise ValueError("mse must be nonnegative")
    if mse_value == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse_value)


def format_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.6f}"


def summarize(sample_mses, thresholds: EvalThresholds | None = None) -> EvalSummary:
    if thresholds is None:
        thresholds = EvalThresholds()
    sample_mses = list(sample_mses)
    if not sample_mses:
        raise ValueError("no samples to summarize")
    records = []
    clamped = []
    for i, m in enumerate(sample_mses):
        p = psnr(m)
        records.append(SampleRecord(
            sample_id=i, mse=float(m), psnr_db=p,
            accurate=m < thresholds.accurate_mse,
            approximate=m < thresholds.approximate_mse,
        ))
        clamped.append(min(p, PSNR_CLAMP_DB))
    n = len(records)
    return EvalSummary(
        accurate_rate=100.0 * sum(r.accurate for r in records) / n,
        approximate_rate=100.0 * sum(r.approximate for r in records) / n,
        average_psnr=float(np.mean(clamped)),
        records=records,
    )
