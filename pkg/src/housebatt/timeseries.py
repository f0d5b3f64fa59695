"""Hourly inverter data: CSV ingestion, gap marking and site eligibility."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

HOUR = timedelta(hours=1)
CSV_HEADER = ("timestamp", "load_kwh", "pv_kwh")

MIN_MEAN_POWER_W = 200.0
MIN_COMPLETENESS = 0.9
MAX_PV_LOAD_RATIO = 1.0


class DatasetError(ValueError):
    """Raised for malformed or inconsistent inverter data."""


@dataclass(frozen=True)
class HourlyRecord:
    timestamp: datetime
    load_kwh: float
    pv_kwh: float
    present: bool = True

    def __post_init__(self) -> None:
        if self.timestamp.tzinfo is None:
            raise DatasetError(f"timestamp {self.timestamp} has no UTC offset")
        if (self.timestamp.minute, self.timestamp.second, self.timestamp.microsecond) != (0, 0, 0):
            raise DatasetError(f"timestamp {self.timestamp.isoformat()} is not on an hour boundary")
        if self.present and (self.load_kwh < 0 or self.pv_kwh < 0):
            raise DatasetError(f"negative energy at {self.timestamp.isoformat()}")


@dataclass(frozen=True)
class InverterDataset:
    """One site's contiguous hourly series; absent hours carry ``present=False``."""

    site_id: str
    records: tuple[HourlyRecord, ...]
    utc_offset_minutes: int
    load: np.ndarray = field(init=False, repr=False, compare=False)
    pv: np.ndarray = field(init=False, repr=False, compare=False)
    present: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        recs = tuple(self.records)
        object.__setattr__(self, "records", recs)
        if len(recs) < 24:
            raise DatasetError(f"dataset {self.site_id!r} has {len(recs)} records, need at least 24")
        tz = timezone(timedelta(minutes=self.utc_offset_minutes))
        for prev, cur in zip(recs, recs[1:]):
            if cur.timestamp - prev.timestamp != HOUR:
                raise DatasetError(
                    f"records not hourly-contiguous at {cur.timestamp.isoformat()}"
                )
        for r in recs:
            if r.timestamp.utcoffset() != tz.utcoffset(None):
                raise DatasetError(
                    f"record {r.timestamp.isoformat()} does not use offset {self.utc_offset_minutes} min"
                )
        present = np.array([r.present for r in recs], dtype=bool)
        load = np.array([r.load_kwh if r.present else 0.0 for r in recs], dtype=float)
        pv = np.array([r.pv_kwh if r.present else 0.0 for r in recs], dtype=float)
        for arr in (present, load, pv):
            arr.setflags(write=False)
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "load", load)
        object.__setattr__(self, "pv", pv)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def start(self) -> datetime:
        return self.records[0].timestamp

    @property
    def end(self) -> datetime:
        return self.records[-1].timestamp

    def index_of(self, t: datetime) -> int:
        """Position of hour ``t`` in the series (may be out of range)."""
        delta = t - self.start
        idx, rem = divmod(delta, HOUR)
        if rem:
            raise DatasetError(f"{t.isoformat()} is not on the dataset's hour grid")
        return int(idx)

    def timestamp_at(self, i: int) -> datetime:
        return self.start + i * HOUR


@dataclass(frozen=True)
class EligibilityReport:
    mean_load_w: float
    mean_pv_w: float
    completeness: float
    pv_load_ratio: float
    eligible: bool


def _tz(utc_offset_minutes: int) -> timezone:
    return timezone(timedelta(minutes=utc_offset_minutes))


def _parse_energy(text: str, what: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"line {lineno}: {what} {text!r} is not a number") from None
    if not np.isfinite(value):
        raise DatasetError(f"line {lineno}: {what} is not finite")
    if value < 0:
        raise DatasetError(f"line {lineno}: negative energy in {what} ({text})")
    return value


def from_rows(
    site_id: str,
    rows: Iterable[tuple[datetime, float, float]],
    utc_offset_minutes: int,
) -> InverterDataset:
    """Build a gap-filled dataset from ``(timestamp, load, pv)`` rows in time order."""
    tz = _tz(utc_offset_minutes)
    records: list[HourlyRecord] = []
    for ts, load, pv in rows:
        ts = ts.astimezone(tz)
        if records:
            last = records[-1].timestamp
            if ts == last:
                raise DatasetError(f"duplicate hour {ts.isoformat()}")
            if ts < last:
                raise DatasetError(f"non-monotonic timestamp {ts.isoformat()} after {last.isoformat()}")
            gap = last + HOUR
            while gap < ts:
                records.append(HourlyRecord(gap, 0.0, 0.0, present=False))
                gap += HOUR
        records.append(HourlyRecord(ts, float(load), float(pv)))
    return InverterDataset(site_id, tuple(records), utc_offset_minutes)


def load_dataset(path: str | Path, utc_offset_minutes: int | None = None, site_id: str | None = None) -> InverterDataset:
    """Read a ``timestamp,load_kwh,pv_kwh`` CSV, filling missing hours as gaps.

    Sub-hourly timestamps are rejected rather than resampled. Without an
    explicit offset, the first row's offset becomes the site's local time.
    """
    path = Path(path)
    rows: list[tuple[datetime, float, float]] = []
    seen: datetime | None = None
    tz = _tz(utc_offset_minutes) if utc_offset_minutes is not None else None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DatasetError(f"{path}: line 1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DatasetError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[0].strip())
            except ValueError:
                raise DatasetError(f"{path}: line {lineno}: bad timestamp {row[0]!r}") from None
            if ts.tzinfo is None:
                raise DatasetError(f"{path}: line {lineno}: timestamp {row[0]!r} lacks a UTC offset")
            if (ts.minute, ts.second, ts.microsecond) != (0, 0, 0):
                raise DatasetError(f"{path}: line {lineno}: sub-hourly timestamp {row[0]!r}")
            if tz is None:
                utc_offset_minutes = int(ts.utcoffset().total_seconds() // 60)
                tz = _tz(utc_offset_minutes)
            ts = ts.astimezone(tz)
            try:
                load = _parse_energy(row[1].strip(), "load_kwh", lineno)
                pv = _parse_energy(row[2].strip(), "pv_kwh", lineno)
            except DatasetError as exc:
                raise DatasetError(f"{path}: {exc}") from None
            if seen is not None:
                if ts == seen:
                    raise DatasetError(f"{path}: line {lineno}: duplicate hour {ts.isoformat()}")
                if ts < seen:
                    raise DatasetError(f"{path}: line {lineno}: non-monotonic timestamp {ts.isoformat()}")
            seen = ts
            rows.append((ts, load, pv))
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return from_rows(site_id or path.stem, rows, utc_offset_minutes)


def write_dataset(ds: InverterDataset, path: str | Path) -> None:
    """Write present records only; gaps stay implicit, as on input."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in ds.records:
            if r.present:
                w.writerow([r.timestamp.isoformat(), repr(r.load_kwh), repr(r.pv_kwh)])


def eligibility(ds: InverterDataset) -> EligibilityReport:
    n_present = int(ds.present.sum())
    if n_present == 0:
        raise DatasetError(f"dataset {ds.site_id!r} has no present records")
    load = ds.load[ds.present]
    pv = ds.pv[ds.present]
    mean_load_w = float(load.mean()) * 1000.0
    mean_pv_w = float(pv.mean()) * 1000.0
    completeness = n_present / len(ds)
    total_load = float(load.sum())
    ratio = float(pv.sum()) / total_load if total_load > 0 else float("inf")
    eligible = (
        mean_load_w >= MIN_MEAN_POWER_W
        and mean_pv_w >= MIN_MEAN_POWER_W
        and completeness >= MIN_COMPLETENESS
        and ratio < MAX_PV_LOAD_RATIO
    )
    return EligibilityReport(mean_load_w, mean_pv_w, completeness, ratio, eligible)


def hourly_grid(start: datetime, n: int) -> Sequence[datetime]:
    return [start + i * HOUR for i in range(n)]
