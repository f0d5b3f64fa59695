from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping

import numpy as np

QUANTILES = (0.4, 0.5, 0.6)


class ForecastError(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ForecastSet:
    """Per-hour quantile forecasts of load and PV (kWh) starting at ``start``.

    ``available[i]`` is False when no usable forecast exists for hour ``i``;
    the simulator then runs the inverter in automatic mode for that hour.
    """

    start: datetime
    horizon_h: int
    load_q: Mapping[float, np.ndarray]
    pv_q: Mapping[float, np.ndarray]
    available: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        for name, qs in (("load", self.load_q), ("pv", self.pv_q)):
            if set(qs) != set(QUANTILES):
                raise ForecastError(f"{name} forecast needs quantiles {QUANTILES}, got {sorted(qs)}")
            frozen = {q: _frozen(qs[q]) for q in QUANTILES}
            for q, arr in frozen.items():
                if arr.shape != (self.horizon_h,):
                    raise ForecastError(f"{name} q{q} has shape {arr.shape}, expected ({self.horizon_h},)")
                if np.any(arr < 0):
                    raise ForecastError(f"{name} q{q} has negative values")
            if np.any(frozen[0.4] > frozen[0.5]) or np.any(frozen[0.5] > frozen[0.6]):
                raise ForecastError(f"{name} quantiles are not monotone")
            object.__setattr__(self, name + "_q", frozen)
        avail = np.ones(self.horizon_h, dtype=bool) if self.available is None else np.array(self.available, dtype=bool)
        if avail.shape != (self.horizon_h,):
            raise ForecastError("availability mask has the wrong length")
        avail.setflags(write=False)
        object.__setattr__(self, "available", avail)

    @classmethod
    def point(cls, start: datetime, load, pv, available=None) -> "ForecastSet":
        """A deterministic forecast: all three quantiles equal."""
        load = np.asarray(load, dtype=float)
        pv = np.asarray(pv, dtype=float)
        return cls(
            start,
            len(load),
            {q: load for q in QUANTILES},
            {q: pv for q in QUANTILES},
            available,
        )
