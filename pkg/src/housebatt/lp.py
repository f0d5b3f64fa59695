"""24-hour cost-minimising battery schedule as a linear program.

Per hour ``n`` the decision variables are grid import ``I``, grid export ``E``,
battery discharge ``Q``, battery charge ``R`` and end-of-hour SoC ``S``.
The program minimises ``sum(t*I - f*E)`` subject to

    L - P = (Q - R) + I - E
    S[n] = S[n-1] - Q*(1 + loss) + R*(1 - loss)
    soc_min <= S <= soc_max,  0 <= I <= import_limit,  0 <= E <= export_limit
    -rate <= Q - R <= rate,   Q, R >= 0

A tiny throughput penalty on ``Q + R`` breaks ties away from simultaneous
charge/discharge. There is no terminal SoC constraint, so plans drain the
battery towards the end of the horizon.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Literal

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_array

from housebatt.battery import BatteryCommand, BatteryConfig, Mode, SocState
from housebatt.forecasting.base import ForecastSet
from housebatt.tariff import TariffSchedule

TIE_BREAK_C_PER_KWH = 1e-6
SOLVER_TOL = 1e-9
COMMAND_EPS = 1e-6
DEFAULT_GRID_LIMIT_KWH = 15.0

_NVAR = 5  # I, E, Q, R, S
_I, _E, _Q, _R, _S = range(_NVAR)


class ScheduleError(RuntimeError):
    pass


@dataclass(frozen=True)
class LPInstance:
    t: np.ndarray
    f: np.ndarray
    L: np.ndarray
    P: np.ndarray
    s0: float
    battery: BatteryConfig
    import_limit_kwh: float = DEFAULT_GRID_LIMIT_KWH
    export_limit_kwh: float = DEFAULT_GRID_LIMIT_KWH
    start: datetime | None = None

    def __post_init__(self) -> None:
        arrays = {}
        for name in ("t", "f", "L", "P"):
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim != 1:
                raise ScheduleError(f"{name} must be a vector")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ScheduleError(f"{name} must be finite and non-negative")
            a.setflags(write=False)
            arrays[name] = a
        lengths = {len(a) for a in arrays.values()}
        if len(lengths) != 1:
            raise ScheduleError(f"vector lengths differ: {sorted(lengths)}")
        if arrays["t"].size == 0:
            raise ScheduleError("empty horizon")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)
        b = self.battery
        if not (b.soc_min_kwh - 1e-9 <= self.s0 <= b.soc_max_kwh + 1e-9):
            raise ScheduleError(f"initial SoC {self.s0} outside [{b.soc_min_kwh}, {b.soc_max_kwh}]")
        if self.import_limit_kwh < 0 or self.export_limit_kwh < 0:
            raise ScheduleError("grid limits must be non-negative")

    @property
    def horizon_h(self) -> int:
        return int(self.t.size)


@dataclass(frozen=True)
class DispatchSchedule:
    status: Literal["optimal", "infeasible"]
    import_kwh: np.ndarray = field(repr=False)
    export_kwh: np.ndarray = field(repr=False)
    discharge_kwh: np.ndarray = field(repr=False)
    charge_kwh: np.ndarray = field(repr=False)
    soc_kwh: np.ndarray = field(repr=False)
    objective_c: float
    message: str = ""

    @property
    def battery_kwh(self) -> np.ndarray:
        return self.discharge_kwh - self.charge_kwh

    @property
    def horizon_h(self) -> int:
        return int(self.import_kwh.size)

    def commands(self) -> list[BatteryCommand]:
        return [_command(b) for b in self.battery_kwh]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hour", "import_kwh", "export_kwh", "discharge_kwh", "charge_kwh", "soc_kwh", "command"])
        for h, cmd in enumerate(self.commands()):
            w.writerow(
                [h]
                + [f"{x[h]:.6f}" for x in (self.import_kwh, self.export_kwh, self.discharge_kwh, self.charge_kwh, self.soc_kwh)]
                + [str(cmd)]
            )
        return buf.getvalue()


def build_instance(
    tariff: TariffSchedule,
    forecast: ForecastSet,
    start: datetime,
    s0: SocState,
    battery: BatteryConfig,
    horizon_h: int = 24,
    load_quantile: float = 0.5,
    pv_quantile: float = 0.5,
    import_limit_kwh: float = DEFAULT_GRID_LIMIT_KWH,
    export_limit_kwh: float = DEFAULT_GRID_LIMIT_KWH,
) -> LPInstance:
    """Price vectors from ``tariff`` and load/PV from the chosen forecast quantiles."""
    offset, rem = divmod(start - forecast.start, timedelta(hours=1))
    if rem or offset < 0:
        raise ScheduleError(f"start {start.isoformat()} is not inside the forecast window")
    if horizon_h <= 0 or offset + horizon_h > forecast.horizon_h:
        raise ScheduleError(
            f"forecast covers {forecast.horizon_h - max(offset, 0)} h from {start.isoformat()}, need {horizon_h}"
        )
    hours = [start + timedelta(hours=h) for h in range(horizon_h)]
    rates = [tariff.rates_at(ts) for ts in hours]
    sl = slice(offset, offset + horizon_h)
    return LPInstance(
        t=np.array([r[1] for r in rates]),
        f=np.array([r[2] for r in rates]),
        L=forecast.load_q[load_quantile][sl],
        P=forecast.pv_q[pv_quantile][sl],
        s0=s0.soc_kwh,
        battery=battery,
        import_limit_kwh=import_limit_kwh,
        export_limit_kwh=export_limit_kwh,
        start=start,
    )


def _matrices(inst: LPInstance):
    H = inst.horizon_h
    b = inst.battery
    n = _NVAR * H
    idx = lambda h, k: _NVAR * h + k  # noqa: E731

    c = np.zeros(n)
    penalty = TIE_BREAK_C_PER_KWH + b.soh_penalty_c_per_kwh
    for h in range(H):
        c[idx(h, _I)] = inst.t[h]
        c[idx(h, _E)] = -inst.f[h]
        c[idx(h, _Q)] = penalty
        c[idx(h, _R)] = penalty

    rows, cols, vals = [], [], []
    b_eq = np.zeros(2 * H)
    for h in range(H):
        # balance: Q - R + I - E = L - P
        for k, v in ((_Q, 1.0), (_R, -1.0), (_I, 1.0), (_E, -1.0)):
            rows.append(h); cols.append(idx(h, k)); vals.append(v)
        b_eq[h] = inst.L[h] - inst.P[h]
        # transition: S[h] - S[h-1] + (1+loss) Q - (1-loss) R = 0
        r = H + h
        rows.append(r); cols.append(idx(h, _S)); vals.append(1.0)
        rows.append(r); cols.append(idx(h, _Q)); vals.append(b.discharge_cost)
        rows.append(r); cols.append(idx(h, _R)); vals.append(-b.charge_gain)
        if h == 0:
            b_eq[r] = inst.s0
        else:
            rows.append(r); cols.append(idx(h - 1, _S)); vals.append(-1.0)
    A_eq = csr_array((vals, (rows, cols)), shape=(2 * H, n))

    rows, cols, vals = [], [], []
    for h in range(H):
        rows += [2 * h, 2 * h, 2 * h + 1, 2 * h + 1]
        cols += [idx(h, _Q), idx(h, _R), idx(h, _Q), idx(h, _R)]
        vals += [1.0, -1.0, -1.0, 1.0]
    A_ub = csr_array((vals, (rows, cols)), shape=(2 * H, n))
    b_ub = np.full(2 * H, b.rate_limit_kwh)

    bounds = []
    for _ in range(H):
        bounds += [
            (0.0, inst.import_limit_kwh),
            (0.0, inst.export_limit_kwh),
            (0.0, None),
            (0.0, None),
            (b.soc_min_kwh, b.soc_max_kwh),
        ]
    return c, A_ub, b_ub, A_eq, b_eq, bounds


def _diagnose(inst: LPInstance) -> str:
    """Name the first hour whose limits cannot be met.

    Tracks the highest SoC reachable at each hour; simultaneous charge and
    discharge can always burn energy, so only the upper end matters.
    """
    b = inst.battery
    hi = inst.s0
    for h in range(inst.horizon_h):
        net = inst.L[h] - inst.P[h]
        b_lo = max(net - inst.import_limit_kwh, -b.rate_limit_kwh)
        b_hi = min(net + inst.export_limit_kwh, b.rate_limit_kwh)
        if net > inst.import_limit_kwh + b.rate_limit_kwh:
            return f"hour {h}: net load {net:.4f} kWh exceeds import limit {inst.import_limit_kwh} + battery rate {b.rate_limit_kwh}"
        if b_lo > b_hi:
            return f"hour {h}: surplus {-net:.4f} kWh exceeds export limit {inst.export_limit_kwh} + battery rate {b.rate_limit_kwh}"
        reach = hi - b_lo * (b.discharge_cost if b_lo >= 0 else b.charge_gain)
        if reach < b.soc_min_kwh - 1e-9:
            avail = max(hi - b.soc_min_kwh, 0.0) / b.discharge_cost
            return (
                f"hour {h}: import limit {inst.import_limit_kwh} leaves {b_lo:.4f} kWh for the battery, "
                f"but at most {avail:.4f} kWh is deliverable above soc_min {b.soc_min_kwh}"
            )
        hi = min(b.soc_max_kwh, reach)
    return "import/export limits cannot be met together with the SoC bounds over the horizon"


def solve(inst: LPInstance) -> DispatchSchedule:
    """Optimal vertex solution via HiGHS dual simplex (deterministic)."""
    H = inst.horizon_h
    c, A_ub, b_ub, A_eq, b_eq, bounds = _matrices(inst)
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs-ds",
        options={
            "primal_feasibility_tolerance": SOLVER_TOL,
            "dual_feasibility_tolerance": SOLVER_TOL,
            "presolve": True,
        },
    )
    if res.status == 2:
        z = np.zeros(H)
        return DispatchSchedule("infeasible", z, z, z, z, z, float("nan"), _diagnose(inst))
    if res.status != 0:
        raise ScheduleError(f"LP solver failed: {res.message}")
    x = res.x.reshape(H, _NVAR).copy()
    x[np.abs(x) < 1e-12] = 0.0
    x[:, :_S] = np.maximum(x[:, :_S], 0.0)
    cols = [x[:, k].copy() for k in range(_NVAR)]
    for a in cols:
        a.setflags(write=False)
    I, E, Q, R, S = cols
    objective = float(np.dot(inst.t, I) - np.dot(inst.f, E))
    return DispatchSchedule("optimal", I, E, Q, R, S, objective)


def _command(b: float) -> BatteryCommand:
    if b > COMMAND_EPS:
        return BatteryCommand(Mode.DISCHARGE, float(b))
    if b < -COMMAND_EPS:
        return BatteryCommand(Mode.CHARGE, float(-b))
    return BatteryCommand(Mode.AUTOMATIC)


def first_command(sch: DispatchSchedule) -> BatteryCommand:
    """Command for the current hour from the plan's first battery flow."""
    if sch.status != "optimal":
        raise ScheduleError(f"no command from an {sch.status} schedule: {sch.message}")
    return _command(float(sch.discharge_kwh[0] - sch.charge_kwh[0]))
