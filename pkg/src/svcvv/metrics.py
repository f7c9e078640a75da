"""Agreement statistics between estimated and reference angle series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateInput(ValueError):
    pass


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float


def linear_regression(x, y) -> RegressionResult:
    """Ordinary least squares ``y = slope * x + intercept``.

    When ``y`` is constant (SS_tot = 0) and fits exactly, R^2 is reported as 1.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D series of equal length")
    if len(x) < 2:
        raise DegenerateInput("need at least two points")
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise DegenerateInput("x is constant")
    dy = y - y.mean()
    slope = float(dx @ dy) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(dy @ dy)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return RegressionResult(slope, intercept, r2)


def mad(x, y) -> float:
    """Mean absolute deviation between two series."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("series lengths differ")
    if x.size == 0:
        raise DegenerateInput("empty series")
    return float(np.mean(np.abs(x - y)))


def std_dev(x) -> float:
    """Population standard deviation (divisor n)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise DegenerateInput("need at least two values")
    return float(np.std(x))
