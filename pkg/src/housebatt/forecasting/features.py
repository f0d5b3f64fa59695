"""NWP-derived feature vectors for the load and PV quantile models.

NWP data comes pre-extracted as hourly CSV rows, one per (timestamp, grid
point): ``timestamp,grid_id,distance_km,temp_2m,rh_1000,dswrf,pressure,u10,v10,tcc``.
Each variable enters twice, once from the nearest grid point and once
inverse-distance weighted over all grid points.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from housebatt.forecasting.base import ForecastError

NWP_COLUMNS = ("timestamp", "grid_id", "distance_km", "temp_2m", "rh_1000", "dswrf", "pressure", "u10", "v10", "tcc")
NWP_VARS = NWP_COLUMNS[3:]
# accepted when present; no formulas are derived for them here
RESERVED_VARS = ("wind_chill", "module_temp")
DSWRF_SHIFTS = (-3, -2, -1, 1, 2, 3)
HOUR = timedelta(hours=1)

Target = Literal["load", "pv"]


def idw(values: Sequence[float], distances: Sequence[float]) -> float:
    """Inverse-distance weighted mean; a zero distance returns that point's value."""
    v = np.asarray(values, dtype=float)
    d = np.asarray(distances, dtype=float)
    if v.shape != d.shape or v.size == 0:
        raise ForecastError("values and distances must be equal-length and non-empty")
    if np.any(d < 0):
        raise ForecastError("distances must be non-negative")
    zero = d == 0
    if zero.any():
        return float(v[zero].mean())
    w = 1.0 / d
    return float(np.dot(v, w) / w.sum())


def calendar_features(t: datetime) -> dict[str, float]:
    h = t.hour
    j = t.timetuple().tm_yday
    return {
        "sin_hour": math.sin(2 * math.pi * h / 24),
        "cos_hour": math.cos(2 * math.pi * h / 24),
        "sin_jday": math.sin(2 * math.pi * j / 365),
        "cos_jday": math.cos(2 * math.pi * j / 365),
        "is_weekend": float(t.weekday() >= 5),
    }


def feature_names(target: Target, reserved: bool = False) -> tuple[str, ...]:
    names = ["sin_hour", "cos_hour", "sin_jday", "cos_jday", "is_weekend"]
    names += ["temp_2m", "temp_2m_idw", "rh_1000", "rh_1000_idw"]
    if target == "load":
        return tuple(names)
    pv_vars = ["dswrf"]
    pv_vars += [f"dswrf_{'lag' if s < 0 else 'lead'}{abs(s)}" for s in DSWRF_SHIFTS]
    pv_vars += ["pressure", "pressure_diff", "u10", "v10", "tcc", "tcc_x_dswrf"]
    if reserved:
        pv_vars += list(RESERVED_VARS)
    for v in pv_vars:
        names += [v, f"{v}_idw"]
    return tuple(names)


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


class NwpTable:
    """Hourly NWP fields at a fixed set of grid points around one site."""

    def __init__(self, times: Sequence[datetime], distances: np.ndarray, fields: dict[str, np.ndarray]):
        # fields[var] has shape (n_times, n_points)
        self.times = list(times)
        self.distances = np.asarray(distances, dtype=float)
        if self.distances.ndim != 1 or self.distances.size == 0 or np.any(self.distances < 0):
            raise ForecastError("grid distances must be a non-empty vector of non-negative values")
        self.fields = {k: np.asarray(v, dtype=float) for k, v in fields.items()}
        missing = [v for v in NWP_VARS if v not in self.fields]
        if missing:
            raise ForecastError(f"NWP data missing variable(s): {', '.join(missing)}")
        for k, v in self.fields.items():
            if v.shape != (len(self.times), self.distances.size):
                raise ForecastError(f"NWP field {k} has shape {v.shape}")
        for a, b in zip(self.times, self.times[1:]):
            if b - a != HOUR:
                raise ForecastError(f"NWP timestamps not hourly-contiguous at {b.isoformat()}")
        self._pos = {t: i for i, t in enumerate(self.times)}
        self._nearest = int(np.argmin(self.distances))
        d = self.distances
        if np.any(d == 0):
            w = (d == 0).astype(float)
        else:
            w = 1.0 / d
        self._w = w / w.sum()

    def index(self, t: datetime) -> int:
        try:
            return self._pos[t]
        except KeyError:
            raise ForecastError(f"no NWP data for {t.isoformat()}") from None

    def _pair(self, var: str, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        f = self.fields[var][rows]
        return f[:, self._nearest], f @ self._w

    def matrix(self, times: Sequence[datetime], target: Target, reserved: bool = False) -> np.ndarray:
        """Feature rows for ``times``; columns follow :func:`feature_names`."""
        rows = np.array([self.index(t) for t in times], dtype=int)
        n = len(self.times)
        cols: list[np.ndarray] = []
        cal = [calendar_features(t) for t in times]
        for key in ("sin_hour", "cos_hour", "sin_jday", "cos_jday", "is_weekend"):
            cols.append(np.array([c[key] for c in cal]))
        for var in ("temp_2m", "rh_1000"):
            cols.extend(self._pair(var, rows))
        if target == "load":
            return np.column_stack(cols)
        if reserved:
            absent = [v for v in RESERVED_VARS if v not in self.fields]
            if absent:
                raise ForecastError(f"NWP data missing reserved column(s): {', '.join(absent)}")
        cols.extend(self._pair("dswrf", rows))
        for s in DSWRF_SHIFTS:
            cols.extend(self._pair("dswrf", np.clip(rows + s, 0, n - 1)))
        cols.extend(self._pair("pressure", rows))
        prev = np.clip(rows - 1, 0, n - 1)
        p_now, p_now_idw = self._pair("pressure", rows)
        p_prev, p_prev_idw = self._pair("pressure", prev)
        cols.extend([p_now - p_prev, p_now_idw - p_prev_idw])
        for var in ("u10", "v10", "tcc"):
            cols.extend(self._pair(var, rows))
        prod = self.fields["tcc"][rows] * self.fields["dswrf"][rows]
        cols.extend([prod[:, self._nearest], prod @ self._w])
        if reserved:
            for var in RESERVED_VARS:
                cols.extend(self._pair(var, rows))
        return np.column_stack(cols)


def build_features(nwp: NwpTable, t: datetime, target: Target, reserved: bool = False) -> FeatureVector:
    return FeatureVector(feature_names(target, reserved), nwp.matrix([t], target, reserved)[0])


def load_nwp(path: str | Path, utc_offset_minutes: int | None = None) -> NwpTable:
    """Read an NWP CSV; every timestamp must list the same grid points."""
    path = Path(path)
    tz = timezone(timedelta(minutes=utc_offset_minutes)) if utc_offset_minutes is not None else None
    by_time: dict[datetime, dict[str, tuple[float, dict[str, float]]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in NWP_COLUMNS if c not in header]
        if missing:
            raise ForecastError(f"{path}: missing column(s) {', '.join(missing)}")
        extra = [c for c in RESERVED_VARS if c in header]
        for lineno, row in enumerate(reader, start=2):
            try:
                ts = datetime.fromisoformat(row["timestamp"])
                if ts.tzinfo is None:
                    raise ValueError("timestamp lacks UTC offset")
                if tz is not None:
                    ts = ts.astimezone(tz)
                dist = float(row["distance_km"])
                vals = {v: float(row[v]) for v in NWP_VARS + tuple(extra)}
            except (ValueError, TypeError) as exc:
                raise ForecastError(f"{path}: line {lineno}: {exc}") from None
            slot = by_time.setdefault(ts, {})
            if row["grid_id"] in slot:
                raise ForecastError(f"{path}: line {lineno}: duplicate grid point {row['grid_id']!r}")
            slot[row["grid_id"]] = (dist, vals)
    if not by_time:
        raise ForecastError(f"{path}: no rows")
    times = sorted(by_time)
    grid_ids = sorted(by_time[times[0]])
    for t in times:
        if sorted(by_time[t]) != grid_ids:
            raise ForecastError(f"{path}: grid points differ at {t.isoformat()}")
    distances = np.array([by_time[times[0]][g][0] for g in grid_ids])
    names = NWP_VARS + tuple(extra)
    fields = {v: np.array([[by_time[t][g][1][v] for g in grid_ids] for t in times]) for v in names}
    return NwpTable(times, distances, fields)


def write_nwp(nwp: NwpTable, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NWP_COLUMNS)
        for i, t in enumerate(nwp.times):
            for g, d in enumerate(nwp.distances):
                w.writerow(
                    [t.isoformat(), f"g{g}", repr(float(d))]
                    + [repr(float(nwp.fields[v][i, g])) for v in NWP_VARS]
                )
