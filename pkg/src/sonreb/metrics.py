"""Goodness-of-fit statistics for strength predictions.

All error terms use ``e = actual - predicted``, so an under-prediction is a
positive error.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .errors import DegenerateInputError, DomainError

#: Column order of a serialized report row (after ``model`` and ``split``).
REPORT_FIELDS = ("r2", "rmse", "nmse", "fb", "max_pos_err", "max_neg_err", "mape")


@dataclass(frozen=True)
class MetricsReport:
    r2: float
    rmse: float
    nmse: float
    fb: float
    max_pos_err: float
    max_neg_err: float
    mape: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def values(self) -> tuple[float, ...]:
        return astuple(self)


def _pair(x, y, min_len=2):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DomainError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < min_len:
        raise DomainError(f"need at least {min_len} values, got {x.size}")
    return x, y


def coeff_det(x, y) -> float:
    """Squared Pearson correlation between two series.

    Raises
    ------
    DegenerateInputError
        If either series has zero variance.
    """
    x, y = _pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("coefficient of determination undefined for a constant vector")
    r2 = float(dx @ dy) ** 2 / (sxx * syy)
    return min(max(r2, 0.0), 1.0)


def evaluate(actual, predicted) -> MetricsReport:
    """Compute the seven-statistic report for one model on one split.

    Parameters
    ----------
    actual, predicted : array_like
        Observed and predicted strengths. ``actual`` must be strictly
        positive (MAPE divides by it) and ``mean(predicted)`` positive
        (NMSE divides by it).
    """
    a, p = _pair(actual, predicted)
    if np.any(a == 0.0):
        raise DomainError("MAPE undefined: actual contains zero")
    if np.any(a < 0.0):
        raise DomainError("actual values must be positive")
    mean_a = float(a.mean())
    mean_p = float(p.mean())
    if mean_p <= 0.0:
        raise DomainError(f"NMSE undefined: mean prediction {mean_p} is not positive")

    e = a - p
    mse = float(np.mean(e * e))
    try:
        r2 = coeff_det(a, p)
    except DegenerateInputError:
        # A constant prediction explains none of the variance.
        r2 = 0.0
    return MetricsReport(
        r2=r2,
        rmse=float(np.sqrt(mse)),
        nmse=mse / (mean_a * mean_p),
        fb=2.0 * (mean_a - mean_p) / (mean_a + mean_p),
        max_pos_err=float(e.max()),
        max_neg_err=float(e.min()),
        mape=100.0 * float(np.mean(np.abs(e) / a)),
    )
