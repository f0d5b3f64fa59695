"""Deterministic synthetic sites: hourly load/PV plus a matching NWP table.

PV follows a clear-sky half-sine scaled by daily cloudiness; the NWP table
sees a noisy version of that cloudiness, so NWP-driven forecasts are good but
not exact. Load is evening-peaked with day-level and hourly noise.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np

from housebatt.forecasting.features import NWP_VARS, NwpTable
from housebatt.timeseries import InverterDataset, from_rows

AEST = 600
GRID_DISTANCES_KM = (7.0, 11.0, 13.0, 17.0)


def _clear_sky(hours: np.ndarray, jday: np.ndarray) -> np.ndarray:
    """W/m2; daylight 06:00-18:00, mild seasonal swing."""
    day = np.clip(np.sin(np.pi * (hours - 6) / 12), 0, None)
    season = 1.0 + 0.15 * np.cos(2 * np.pi * (jday - 355) / 365)
    return 1000.0 * day * season


def make_site(
    days: int = 90,
    pv_load_ratio: float = 0.8,
    seed: int = 0,
    start: datetime | None = None,
    site_id: str = "synthetic",
    utc_offset_minutes: int = AEST,
    cloud_persistence: float = 0.6,
    load_noise: float = 0.15,
) -> tuple[InverterDataset, NwpTable]:
    rng = np.random.default_rng(seed)
    tz = timezone(timedelta(minutes=utc_offset_minutes))
    start = start or datetime(2018, 7, 2, tzinfo=tz)  # a Monday
    n = days * 24
    # NWP runs 3 h past both ends so leads/lags are real values
    pad = 3
    times = [start + timedelta(hours=h - pad) for h in range(n + 2 * pad)]
    hours = np.array([t.hour for t in times], dtype=float)
    jday = np.array([t.timetuple().tm_yday for t in times], dtype=float)
    day_idx = (np.arange(n + 2 * pad) + (24 - pad)) // 24

    n_days = int(day_idx.max()) + 1
    # day-to-day weather regimes persist: AR(1) latent pushed through a logistic
    z = np.empty(n_days)
    z[0] = rng.normal()
    for d in range(1, n_days):
        z[d] = cloud_persistence * z[d - 1] + np.sqrt(1 - cloud_persistence**2) * rng.normal()
    cloud_day = 1 / (1 + np.exp(-(1.6 * z - 0.4)))
    cloud_actual = np.clip(cloud_day[day_idx] + rng.normal(0, 0.12, day_idx.size), 0, 1)
    cloud_nwp = np.clip(cloud_actual + rng.normal(0, 0.15, day_idx.size), 0, 1)
    clear = _clear_sky(hours, jday)
    dswrf_actual = clear * (1 - 0.75 * cloud_actual)
    dswrf_nwp = clear * (1 - 0.75 * cloud_nwp)

    temp_day = rng.normal(0, 2.5, n_days)
    temp = 13 + 6 * np.sin(2 * np.pi * (hours - 9) / 24) + temp_day[day_idx] - 3 * cloud_actual
    rh = np.clip(70 - 2.0 * (temp - 13) + 15 * cloud_actual + rng.normal(0, 3, hours.size), 5, 100)
    pressure = 1015 + np.cumsum(rng.normal(0, 0.3, hours.size)) * 0.5 - 4 * cloud_actual
    u10 = rng.normal(2, 2, hours.size)
    v10 = rng.normal(-1, 2, hours.size)

    weekend = np.array([t.weekday() >= 5 for t in times])
    base = 0.28 + 0.06 * np.clip(15 - temp, 0, None)
    evening = 1.25 * np.exp(-0.5 * ((hours - 19) / 1.8) ** 2)
    morning = 0.45 * np.exp(-0.5 * ((hours - 7.5) / 1.2) ** 2)
    midday = np.where(weekend, 0.35, 0.08) * np.exp(-0.5 * ((hours - 13) / 3) ** 2)
    day_mult = np.exp(rng.normal(0, 0.15, n_days))[day_idx]
    hour_noise = np.exp(rng.normal(0, load_noise, hours.size))
    load = (base + evening + morning + midday) * day_mult * hour_noise

    pv_shape = dswrf_actual / 1000 * np.exp(rng.normal(0, 0.05, hours.size))
    core = slice(pad, pad + n)
    scale = pv_load_ratio * load[core].sum() / pv_shape[core].sum()
    pv = pv_shape * scale

    rows = [(times[i], round(float(load[i]), 4), round(float(pv[i]), 4)) for i in range(pad, pad + n)]
    ds = from_rows(site_id, rows, utc_offset_minutes)

    k = len(GRID_DISTANCES_KM)
    spread = rng.normal(0, 0.03, (hours.size, k))

    def grid(field: np.ndarray, rel: float = 1.0) -> np.ndarray:
        return np.round(field[:, None] * (1 + rel * spread), 4)

    fields = {
        "temp_2m": np.round(temp[:, None] + rng.normal(0, 0.4, (hours.size, k)), 3),
        "rh_1000": np.round(np.clip(rh[:, None] + rng.normal(0, 2, (hours.size, k)), 0, 100), 3),
        "dswrf": grid(dswrf_nwp),
        "pressure": np.round(pressure[:, None] + rng.normal(0, 0.2, (hours.size, k)), 3),
        "u10": np.round(u10[:, None] + rng.normal(0, 0.3, (hours.size, k)), 3),
        "v10": np.round(v10[:, None] + rng.normal(0, 0.3, (hours.size, k)), 3),
        "tcc": np.round(np.clip(cloud_nwp[:, None] + rng.normal(0, 0.03, (hours.size, k)), 0, 1), 4),
    }
    assert set(fields) == set(NWP_VARS)
    nwp = NwpTable(times, np.array(GRID_DISTANCES_KM), fields)
    return ds, nwp


def heteroscedastic(n: int = 1200, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Features ``x`` in [0, 1]^3 and targets whose spread grows with ``x[:, 0]``."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, 3))
    mean = 1.0 + 2.0 * X[:, 0] + 0.5 * np.sin(2 * np.pi * X[:, 1])
    sd = 0.1 + 0.9 * X[:, 0]
    y = np.clip(mean + sd * rng.normal(0, 1, n), 0, None)
    return X, y
