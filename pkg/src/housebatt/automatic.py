"""The inverter's built-in rule cascade, one hour at a time."""

from __future__ import annotations

from dataclasses import dataclass

from housebatt.battery import (
    BatteryConfig,
    SocState,
    max_charge,
    max_discharge,
    soc_transition,
)


@dataclass(frozen=True)
class HourlyFlows:
    import_kwh: float
    export_kwh: float
    discharge_kwh: float
    charge_kwh: float
    soc_end: SocState

    @property
    def battery_kwh(self) -> float:
        """Net battery flow, positive when discharging."""
        return self.discharge_kwh - self.charge_kwh


def settle(cfg: BatteryConfig, s_prev: SocState, load_kwh: float, pv_kwh: float, q: float, r: float) -> HourlyFlows:
    """Close the hour's energy balance through the grid for a fixed battery flow."""
    soc = soc_transition(cfg, s_prev, q, r)
    net = (load_kwh - pv_kwh) - (q - r)
    return HourlyFlows(max(net, 0.0), max(-net, 0.0), q, r, soc)


def automatic_step(cfg: BatteryConfig, s_prev: SocState, load_kwh: float, pv_kwh: float) -> HourlyFlows:
    """Serve load from PV, then battery, then grid; send surplus to battery, then grid.

    The battery never charges from the grid and never exports.
    """
    if load_kwh < 0 or pv_kwh < 0:
        raise ValueError("load and pv must be non-negative")
    if load_kwh > pv_kwh:
        q = min(load_kwh - pv_kwh, max_discharge(cfg, s_prev))
        return settle(cfg, s_prev, load_kwh, pv_kwh, q, 0.0)
    if pv_kwh > load_kwh:
        r = min(pv_kwh - load_kwh, max_charge(cfg, s_prev))
        return settle(cfg, s_prev, load_kwh, pv_kwh, 0.0, r)
    return HourlyFlows(0.0, 0.0, 0.0, 0.0, s_prev)
