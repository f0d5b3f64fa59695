"""Time-of-use tariffs: declarative rules compiled to an hour-of-week lookup."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
BUNDLED = tuple(f"tariff{i}" for i in range(1, 11))


class TariffError(ValueError):
    pass


class Period(str, enum.Enum):
    OFF_PEAK = "off-peak"
    SHOULDER = "shoulder"
    PEAK = "peak"

    @classmethod
    def parse(cls, text: str) -> "Period":
        key = str(text).strip().lower().replace("_", "-")
        aliases = {"offpeak": "off-peak", "off-peak": "off-peak", "shoulder": "shoulder", "peak": "peak"}
        if key not in aliases:
            raise TariffError(f"unknown period {text!r}")
        return cls(aliases[key])


_DAY_GROUPS = {
    "all": DAY_NAMES,
    "weekdays": DAY_NAMES[:5],
    "weekends": DAY_NAMES[5:],
}


def _parse_days(value: Any) -> frozenset[int]:
    if isinstance(value, str):
        value = [value]
    days: set[int] = set()
    for item in value:
        name = str(item).strip()
        if name.lower() in _DAY_GROUPS:
            days.update(DAY_NAMES.index(d) for d in _DAY_GROUPS[name.lower()])
            continue
        if "-" in name:
            a, b = (p.strip().title() for p in name.split("-", 1))
            if a not in DAY_NAMES or b not in DAY_NAMES:
                raise TariffError(f"bad day range {name!r}")
            i, j = DAY_NAMES.index(a), DAY_NAMES.index(b)
            if i > j:
                raise TariffError(f"day range {name!r} runs backwards")
            days.update(range(i, j + 1))
            continue
        if name.title() not in DAY_NAMES:
            raise TariffError(f"unknown day {name!r}")
        days.add(DAY_NAMES.index(name.title()))
    if not days:
        raise TariffError("rule has no days")
    return frozenset(days)


def _tenths(value: Any, what: str) -> int:
    """Price in c/kWh to integer tenths of a cent."""
    try:
        d = Decimal(str(value))
    except InvalidOperation:
        raise TariffError(f"{what}: {value!r} is not a price") from None
    if d < 0:
        raise TariffError(f"{what}: negative price {value}")
    scaled = d * 10
    if scaled != scaled.to_integral_value():
        raise TariffError(f"{what}: {value} has more than one decimal place")
    return int(scaled)


@dataclass(frozen=True)
class PeriodRule:
    period: Period
    days: frozenset[int]
    start_hour: int
    end_hour: int

    def __post_init__(self) -> None:
        if not (0 <= self.start_hour <= 23 and 1 <= self.end_hour <= 24):
            raise TariffError(f"rule hours out of range: {self.start_hour}-{self.end_hour}")
        if self.start_hour >= self.end_hour:
            raise TariffError(f"rule start {self.start_hour} >= end {self.end_hour}")

    def matches(self, weekday: int, hour: int) -> bool:
        return weekday in self.days and self.start_hour <= hour < self.end_hour


@dataclass(frozen=True)
class TariffSchedule:
    name: str
    feed_in_tenths: int
    rates_tenths: Mapping[Period, int]
    periods: tuple[PeriodRule, ...]
    default_period: Period | None
    utc_offset_minutes: int | None = None
    # hour-of-week (Mon 00:00 = 0) -> period; built once
    _week: tuple[Period, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        week: list[Period] = []
        uncovered = []
        for how in range(168):
            wd, h = divmod(how, 24)
            period = next((r.period for r in self.periods if r.matches(wd, h)), self.default_period)
            if period is None:
                uncovered.append(f"{DAY_NAMES[wd]} {h:02d}:00")
                continue
            if period not in self.rates_tenths:
                raise TariffError(f"{self.name}: no rate given for period {period.value}")
            week.append(period)
        if uncovered:
            raise TariffError(
                f"{self.name}: uncovered hours with no default ({len(uncovered)}, e.g. {uncovered[0]})"
            )
        for p, v in self.rates_tenths.items():
            if v < 0:
                raise TariffError(f"{self.name}: negative {p.value} price")
        if self.feed_in_tenths < 0:
            raise TariffError(f"{self.name}: negative feed-in price")
        object.__setattr__(self, "_week", tuple(week))

    @property
    def feed_in(self) -> float:
        return self.feed_in_tenths / 10

    def rate(self, period: Period) -> float:
        return self.rates_tenths[period] / 10

    def period_at(self, t: datetime) -> Period:
        return self._week[t.weekday() * 24 + t.hour]

    def rates_at(self, t: datetime) -> tuple[Period, float, float]:
        """(period, import c/kWh, export c/kWh) for the hour containing ``t``."""
        period = self.period_at(t)
        return period, self.rates_tenths[period] / 10, self.feed_in_tenths / 10

    def week_table(self) -> tuple[np.ndarray, np.ndarray]:
        """168-entry arrays of import price (c/kWh) and peak flag, Monday 00:00 first."""
        prices = np.array([self.rates_tenths[p] / 10 for p in self._week])
        peak = np.array([p is Period.PEAK for p in self._week])
        return prices, peak

    def week_periods(self) -> tuple[Period, ...]:
        return self._week


def rates_at(ts: TariffSchedule, t: datetime) -> tuple[Period, float, float]:
    return ts.rates_at(t)


def parse_tariff(config: str | Mapping[str, Any]) -> TariffSchedule:
    """Parse a tariff from YAML text (or an already-loaded mapping).

    Rules are matched in listed order; ``default`` covers any hour no rule claims.
    """
    if isinstance(config, str):
        try:
            data = yaml.safe_load(config)
        except yaml.YAMLError as exc:
            raise TariffError(f"tariff config is not valid YAML: {exc}") from None
    else:
        data = dict(config)
    if not isinstance(data, Mapping):
        raise TariffError("tariff config must be a mapping")
    for key in ("name", "feed_in", "rates"):
        if key not in data:
            raise TariffError(f"tariff config missing {key!r}")
    name = str(data["name"])
    rates = {Period.parse(k): _tenths(v, f"{name}: rate {k}") for k, v in dict(data["rates"]).items()}
    rules = []
    for i, raw in enumerate(data.get("rules") or []):
        try:
            rules.append(
                PeriodRule(
                    period=Period.parse(raw["period"]),
                    days=_parse_days(raw.get("days", "all")),
                    start_hour=int(raw["start"]),
                    end_hour=int(raw["end"]),
                )
            )
        except KeyError as exc:
            raise TariffError(f"{name}: rule {i} missing {exc.args[0]!r}") from None
        except TariffError as exc:
            raise TariffError(f"{name}: rule {i}: {exc}") from None
    default = data.get("default")
    offset = data.get("utc_offset_minutes")
    return TariffSchedule(
        name=name,
        feed_in_tenths=_tenths(data["feed_in"], f"{name}: feed_in"),
        rates_tenths=rates,
        periods=tuple(rules),
        default_period=Period.parse(default) if default is not None else None,
        utc_offset_minutes=int(offset) if offset is not None else None,
    )


def load_tariff(name_or_path: str | Path) -> TariffSchedule:
    """Load a bundled tariff by name (``tariff1`` .. ``tariff10``) or a YAML file path."""
    key = str(name_or_path)
    if key in BUNDLED:
        text = resources.files("housebatt.tariffs").joinpath(f"{key}.yaml").read_text(encoding="utf-8")
        return parse_tariff(text)
    path = Path(name_or_path)
    if not path.exists():
        raise TariffError(f"no bundled tariff or file named {key!r}")
    return parse_tariff(path.read_text(encoding="utf-8"))


def flatten(ts: TariffSchedule, name: str | None = None) -> TariffSchedule:
    """Same period windows, every import rate set to the off-peak rate."""
    base = ts.rates_tenths[Period.OFF_PEAK]
    return TariffSchedule(
        name=name or f"{ts.name}-flat",
        feed_in_tenths=ts.feed_in_tenths,
        rates_tenths={p: base for p in ts.rates_tenths},
        periods=ts.periods,
        default_period=ts.default_period,
        utc_offset_minutes=ts.utc_offset_minutes,
    )
