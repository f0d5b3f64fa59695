"""Baseline forecasts read straight off the observed series."""

from __future__ import annotations

from datetime import datetime
from typing import Literal

import numpy as np

from housebatt.forecasting.base import ForecastError, ForecastSet
from housebatt.timeseries import InverterDataset

Series = Literal["load", "pv", "both"]
GAP_LOOKBACK_DAYS = 7


def _window(ds: InverterDataset, start: datetime, horizon: int) -> np.ndarray:
    if horizon <= 0:
        raise ForecastError("horizon must be positive")
    i0 = ds.index_of(start)
    if i0 < 0 or i0 + horizon > len(ds):
        raise ForecastError(
            f"window {start.isoformat()} + {horizon} h falls outside the dataset"
        )
    return np.arange(i0, i0 + horizon)


def _resolve(ds: InverterDataset, values: np.ndarray, src: int) -> float | None:
    """Value at ``src`` or, if that hour is a gap, the latest present value at the
    same hour of day within a week. ``None`` when nothing usable exists."""
    for k in range(GAP_LOOKBACK_DAYS + 1):
        j = src - 24 * k
        if j < 0:
            break
        if ds.present[j]:
            return float(values[j])
    return None


def _actual(ds: InverterDataset, values: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    out = np.zeros(idx.size)
    ok = np.ones(idx.size, dtype=bool)
    for n, i in enumerate(idx):
        v = _resolve(ds, values, int(i))
        if v is None:
            ok[n] = False
        else:
            out[n] = v
    return out, ok


def _persist(ds: InverterDataset, values: np.ndarray, sources: np.ndarray, idx: np.ndarray):
    out = np.zeros(idx.size)
    ok = np.ones(idx.size, dtype=bool)
    for n, (src, i) in enumerate(zip(sources, idx)):
        # before the data starts the forecast falls back to actuals
        v = _resolve(ds, values, int(src) if src >= 0 else int(i))
        if v is None:
            ok[n] = False
        else:
            out[n] = v
    return out, ok


def perfect(ds: InverterDataset, start: datetime, horizon: int) -> ForecastSet:
    """Actual load and PV over the window."""
    idx = _window(ds, start, horizon)
    load, ok_l = _actual(ds, ds.load, idx)
    pv, ok_p = _actual(ds, ds.pv, idx)
    return ForecastSet.point(start, load, pv, ok_l & ok_p)


def persistence_24h(ds: InverterDataset, start: datetime, horizon: int, series: Series = "both") -> ForecastSet:
    """Each hour repeats the value observed 24 hours earlier.

    Series not persisted come from actuals. Hours whose source lies before the
    start of the data use actuals too.
    """
    if series not in ("load", "pv", "both"):
        raise ForecastError(f"unknown series {series!r}")
    idx = _window(ds, start, horizon)
    src = idx - 24
    if series in ("load", "both"):
        load, ok_l = _persist(ds, ds.load, src, idx)
    else:
        load, ok_l = _actual(ds, ds.load, idx)
    if series in ("pv", "both"):
        pv, ok_p = _persist(ds, ds.pv, src, idx)
    else:
        pv, ok_p = _actual(ds, ds.pv, idx)
    return ForecastSet.point(start, load, pv, ok_l & ok_p)


def persistence_1h(ds: InverterDataset, start: datetime, horizon: int) -> ForecastSet:
    """Every hour of the window repeats the single observation at ``start - 1h``."""
    idx = _window(ds, start, horizon)
    src = np.full(idx.size, idx[0] - 1)
    load, ok_l = _persist(ds, ds.load, src, idx)
    pv, ok_p = _persist(ds, ds.pv, src, idx)
    return ForecastSet.point(start, load, pv, ok_l & ok_p)
