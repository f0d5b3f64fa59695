"""Battery energy accounting: SoC transition with symmetric losses and command clamping."""

from __future__ import annotations

import enum
from dataclasses import dataclass

SOC_TOL = 1e-9


class BatteryError(ValueError):
    pass


@dataclass(frozen=True)
class BatteryConfig:
    """Storage limits in kWh; ``rate_limit_kwh`` is per hour in either direction.

    ``soh_penalty_c_per_kwh`` is a state-of-health hook charged on battery
    throughput by the scheduler. It is off by default.
    """

    capacity_kwh: float = 6.5
    soc_min_kwh: float = 1.3
    soc_max_kwh: float = 6.5
    rate_limit_kwh: float = 4.6
    loss_factor: float = 0.08
    soh_penalty_c_per_kwh: float = 0.0

    def __post_init__(self) -> None:
        if not (0 <= self.soc_min_kwh < self.soc_max_kwh <= self.capacity_kwh):
            raise BatteryError(
                f"need 0 <= soc_min < soc_max <= capacity, got "
                f"{self.soc_min_kwh}, {self.soc_max_kwh}, {self.capacity_kwh}"
            )
        if not (0 <= self.loss_factor < 1):
            raise BatteryError(f"loss_factor must be in [0, 1), got {self.loss_factor}")
        if self.rate_limit_kwh <= 0:
            raise BatteryError(f"rate_limit_kwh must be positive, got {self.rate_limit_kwh}")
        if self.soh_penalty_c_per_kwh < 0:
            raise BatteryError("soh_penalty_c_per_kwh must be non-negative")

    @property
    def discharge_cost(self) -> float:
        """SoC drawn per kWh delivered."""
        return 1.0 + self.loss_factor

    @property
    def charge_gain(self) -> float:
        """SoC stored per kWh absorbed."""
        return 1.0 - self.loss_factor

    @property
    def round_trip(self) -> float:
        return self.charge_gain / self.discharge_cost

    def state(self, soc_kwh: float) -> "SocState":
        if not (self.soc_min_kwh - SOC_TOL <= soc_kwh <= self.soc_max_kwh + SOC_TOL):
            raise BatteryError(f"SoC {soc_kwh} outside [{self.soc_min_kwh}, {self.soc_max_kwh}]")
        return SocState(min(max(soc_kwh, self.soc_min_kwh), self.soc_max_kwh))


@dataclass(frozen=True)
class SocState:
    soc_kwh: float


class Mode(str, enum.Enum):
    AUTOMATIC = "automatic"
    CHARGE = "charge"
    DISCHARGE = "discharge"


@dataclass(frozen=True)
class BatteryCommand:
    mode: Mode
    rate_kwh: float = 0.0

    def __post_init__(self) -> None:
        if self.rate_kwh < 0:
            raise BatteryError(f"command rate must be non-negative, got {self.rate_kwh}")

    def __str__(self) -> str:
        if self.mode is Mode.AUTOMATIC:
            return "automatic"
        return f"{self.mode.value}@{self.rate_kwh:.6f}"


def soc_transition(cfg: BatteryConfig, s_prev: SocState, discharge_q: float, charge_r: float) -> SocState:
    """SoC after delivering ``discharge_q`` and absorbing ``charge_r`` kWh in one hour."""
    if discharge_q < 0 or charge_r < 0:
        raise BatteryError("discharge and charge must be non-negative")
    if discharge_q + charge_r > cfg.rate_limit_kwh + SOC_TOL:
        raise BatteryError(
            f"battery flow {discharge_q + charge_r:.6g} kWh exceeds rate limit {cfg.rate_limit_kwh}"
        )
    soc = s_prev.soc_kwh - discharge_q * cfg.discharge_cost + charge_r * cfg.charge_gain
    if soc < cfg.soc_min_kwh - SOC_TOL or soc > cfg.soc_max_kwh + SOC_TOL:
        raise BatteryError(
            f"SoC {soc:.9g} would leave [{cfg.soc_min_kwh}, {cfg.soc_max_kwh}]; clamp the command first"
        )
    return SocState(min(max(soc, cfg.soc_min_kwh), cfg.soc_max_kwh))


def max_discharge(cfg: BatteryConfig, s_prev: SocState) -> float:
    """Largest deliverable energy this hour."""
    room = max(s_prev.soc_kwh - cfg.soc_min_kwh, 0.0) / cfg.discharge_cost
    return min(cfg.rate_limit_kwh, room)


def max_charge(cfg: BatteryConfig, s_prev: SocState) -> float:
    """Largest absorbable energy this hour."""
    room = max(cfg.soc_max_kwh - s_prev.soc_kwh, 0.0) / cfg.charge_gain
    return min(cfg.rate_limit_kwh, room)


def clamp_command(cfg: BatteryConfig, s_prev: SocState, cmd: BatteryCommand) -> tuple[float, float]:
    """Feasible ``(discharge, charge)`` for ``cmd`` from ``s_prev``.

    Commands beyond the SoC limits are cut back to the limit, so a charge on a
    full battery does nothing. Automatic mode carries no explicit flow and
    yields ``(0, 0)``; the controller decides its flows.
    """
    if cmd.mode is Mode.CHARGE:
        return 0.0, min(cmd.rate_kwh, max_charge(cfg, s_prev))
    if cmd.mode is Mode.DISCHARGE:
        return min(cmd.rate_kwh, max_discharge(cfg, s_prev)), 0.0
    return 0.0, 0.0
