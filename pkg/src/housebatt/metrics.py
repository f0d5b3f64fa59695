"""Forecast error metrics and the percentile summary table."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PERCENTILE_ROWS = (0, 20, 25, 50, 75, 80, 100)


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorReport:
    mape: float
    nmae: float
    nrmse: float
    n: int


def _pair(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if s.shape != p.shape or s.ndim != 1:
        raise MetricError(f"series shapes differ: {s.shape} vs {p.shape}")
    # gap hours (NaN on either side) drop out pairwise
    keep = ~(np.isnan(s) | np.isnan(p))
    s, p = s[keep], p[keep]
    if s.size == 0:
        raise MetricError("no overlapping samples")
    return s, p


def mape(actual, predicted) -> float:
    """Mean absolute percentage error, in percent."""
    s, p = _pair(actual, predicted)
    if np.any(s == 0):
        raise MetricError("MAPE is undefined with zero actual values")
    return float(np.mean(np.abs((s - p) / s)) * 100.0)


def nmae(actual, predicted) -> float:
    s, p = _pair(actual, predicted)
    denom = np.sum(np.abs(s))
    if denom == 0:
        raise MetricError("NMAE is undefined for an all-zero actual series")
    return float(np.sum(np.abs(s - p)) / denom)


def nrmse(actual, predicted) -> float:
    s, p = _pair(actual, predicted)
    denom = np.sum(s**2)
    if denom == 0:
        raise MetricError("NRMSE is undefined for an all-zero actual series")
    return float(np.sqrt(np.sum((s - p) ** 2) / denom))


def pinball(actual, predicted, tau: float) -> float:
    if not 0 < tau < 1:
        raise MetricError(f"tau must be in (0, 1), got {tau}")
    s, p = _pair(actual, predicted)
    diff = s - p
    return float(np.mean(np.maximum(tau * diff, (tau - 1) * diff)))


def error_report(actual, predicted) -> ErrorReport:
    s, p = _pair(actual, predicted)
    try:
        m = mape(s, p)
    except MetricError:
        m = float("nan")
    return ErrorReport(m, nmae(s, p), nrmse(s, p), int(s.size))


def percentile_table(
    columns: dict[str, Sequence[float]], percentiles: Iterable[int] = PERCENTILE_ROWS
) -> list[dict[str, float]]:
    """One row per percentile across sites, e.g. ``{"percentile": 50, "Load NMAE": ...}``."""
    rows = []
    for pct in percentiles:
        row: dict[str, float] = {"percentile": pct}
        for name, values in columns.items():
            v = np.asarray(values, dtype=float)
            v = v[~np.isnan(v)]
            row[name] = float(np.percentile(v, pct)) if v.size else float("nan")
        rows.append(row)
    return rows
