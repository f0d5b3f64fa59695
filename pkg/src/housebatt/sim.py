"""Hour-by-hour replay of a site's data under each dispatch strategy."""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from housebatt.automatic import HourlyFlows, automatic_step, settle
from housebatt.battery import BatteryConfig, Mode, clamp_command
from housebatt.forecasting.base import ForecastSet
from housebatt.forecasting.features import NwpTable
from housebatt.forecasting.persistence import perfect, persistence_1h, persistence_24h
from housebatt.forecasting.qrf import ForestParams
from housebatt.forecasting.rolling import QuantileForecaster
from housebatt.lp import DEFAULT_GRID_LIMIT_KWH, build_instance, first_command, solve
from housebatt.tariff import Period, TariffSchedule
from housebatt.timeseries import InverterDataset, eligibility

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    pass


class StrategyKind(str, enum.Enum):
    NO_SOLAR = "no_solar"
    NO_BATTERY = "no_battery"
    AUTOMATIC = "automatic"
    PV_PERSIST = "pv_persist"
    PV_LOAD_PERSIST = "pv_load_persist"
    Q50_50 = "q50_50"
    LOAD_PERSIST = "load_persist"
    Q60_40 = "q60_40"
    PERSIST_1H = "persist_1h"
    PERFECT = "perfect"


STRATEGIES = tuple(StrategyKind)
FORECAST_STRATEGIES = STRATEGIES[3:]
QUANTILE_STRATEGIES = (StrategyKind.Q50_50, StrategyKind.Q60_40)

# (load quantile, pv quantile) fed to the LP
_QUANTILE_PICK = {
    StrategyKind.Q50_50: (0.5, 0.5),
    StrategyKind.Q60_40: (0.6, 0.4),
}

TABLE_LABELS = {
    StrategyKind.NO_SOLAR: "No Solar",
    StrategyKind.NO_BATTERY: "No Battery",
    StrategyKind.AUTOMATIC: "Automatic",
    StrategyKind.PV_PERSIST: "PV Persist",
    StrategyKind.PV_LOAD_PERSIST: "PV and Load Persisted",
    StrategyKind.Q50_50: "50-50",
    StrategyKind.LOAD_PERSIST: "Load Persisted",
    StrategyKind.Q60_40: "60-40",
    StrategyKind.PERSIST_1H: "Persist last hour",
    StrategyKind.PERFECT: "Perfect Forecast",
}


def parse_strategy(name: str) -> StrategyKind:
    try:
        return StrategyKind(name.strip())
    except ValueError:
        raise SimulationError(
            f"unknown strategy {name!r}; choose from {', '.join(s.value for s in STRATEGIES)}"
        ) from None


@dataclass(frozen=True)
class SimOptions:
    horizon_h: int = 24
    import_limit_kwh: float = DEFAULT_GRID_LIMIT_KWH
    export_limit_kwh: float = DEFAULT_GRID_LIMIT_KWH
    # "non-peak": any weekday hour outside peak; "off-peak": weekday off-peak hours only
    optimize_periods: str = "non-peak"
    force: bool = False

    def __post_init__(self) -> None:
        if self.optimize_periods not in ("non-peak", "off-peak"):
            raise SimulationError(f"optimize_periods must be 'non-peak' or 'off-peak', not {self.optimize_periods!r}")
        if self.horizon_h <= 0:
            raise SimulationError("horizon_h must be positive")


@dataclass(frozen=True)
class CostReport:
    total_cost_c: float
    total_load_kwh: float
    hours_simulated: int
    hours_automatic_fallback: int
    hours_total: int = 0

    @property
    def cost_c_per_kwh(self) -> float:
        return self.total_cost_c / self.total_load_kwh if self.total_load_kwh > 0 else float("nan")

    @property
    def fallback_fraction(self) -> float:
        return self.hours_automatic_fallback / self.hours_total if self.hours_total else float("nan")


@dataclass(frozen=True)
class TraceRow:
    timestamp: str
    mode: str
    load_kwh: float
    pv_kwh: float
    import_kwh: float
    export_kwh: float
    discharge_kwh: float
    charge_kwh: float
    soc_kwh: float
    cost_c: float


TRACE_HEADER = ("hour", "mode", "L", "P", "I", "E", "Q", "R", "S", "cost")


def hour_cost(t_h: float, f_h: float, flows: HourlyFlows) -> float:
    """Cost of one hour in cents; negative when export revenue dominates."""
    return t_h * flows.import_kwh - f_h * flows.export_kwh


def _check_compat(ds: InverterDataset, tariff: TariffSchedule) -> None:
    if tariff.utc_offset_minutes is not None and tariff.utc_offset_minutes != ds.utc_offset_minutes:
        raise SimulationError(
            f"dataset {ds.site_id!r} uses UTC offset {ds.utc_offset_minutes} min but tariff "
            f"{tariff.name!r} is defined for {tariff.utc_offset_minutes} min"
        )


def _forecaster_for(
    kind: StrategyKind, ds: InverterDataset, quantile_forecaster: QuantileForecaster | None
) -> Callable[[object, int], ForecastSet]:
    if kind is StrategyKind.PERFECT:
        return lambda t, h: perfect(ds, t, h)
    if kind is StrategyKind.PV_PERSIST:
        return lambda t, h: persistence_24h(ds, t, h, "pv")
    if kind is StrategyKind.PV_LOAD_PERSIST:
        return lambda t, h: persistence_24h(ds, t, h, "both")
    if kind is StrategyKind.LOAD_PERSIST:
        return lambda t, h: persistence_24h(ds, t, h, "load")
    if kind is StrategyKind.PERSIST_1H:
        return lambda t, h: persistence_1h(ds, t, h)
    if quantile_forecaster is None:
        raise SimulationError(f"strategy {kind.value} needs NWP data for the quantile forecaster")
    if quantile_forecaster.ds is not ds:
        raise SimulationError("quantile forecaster was built for a different dataset")
    return quantile_forecaster.forecast


def simulate(
    ds: InverterDataset,
    tariff: TariffSchedule,
    battery: BatteryConfig,
    strategy: StrategyKind | str,
    *,
    options: SimOptions | None = None,
    quantile_forecaster: QuantileForecaster | None = None,
    trace: list[TraceRow] | None = None,
) -> CostReport:
    """Replay ``ds`` hour by hour and account grid costs.

    Forecast strategies re-solve the 24-hour LP from the actual SoC at every
    weekday hour outside peak and execute its first command against actual
    load and PV. Peak hours, weekends, and hours without a usable forecast or
    schedule run the automatic rules. Gap hours are skipped with SoC held.
    """
    kind = parse_strategy(strategy) if isinstance(strategy, str) else strategy
    opts = options or SimOptions()
    _check_compat(ds, tariff)
    if not opts.force and ds.present.any():
        rep = eligibility(ds)
        if not rep.eligible:
            raise SimulationError(
                f"dataset {ds.site_id!r} is not eligible for optimization "
                f"(load {rep.mean_load_w:.0f} W, pv {rep.mean_pv_w:.0f} W, "
                f"completeness {rep.completeness:.3f}, pv/load {rep.pv_load_ratio:.3f}); use force to override"
            )
    elif not opts.force:
        raise SimulationError(f"dataset {ds.site_id!r} has no present records; use force to override")

    produce = _forecaster_for(kind, ds, quantile_forecaster) if kind in FORECAST_STRATEGIES else None
    load_q, pv_q = _QUANTILE_PICK.get(kind, (0.5, 0.5))
    allowed = {Period.OFF_PEAK} if opts.optimize_periods == "off-peak" else {Period.OFF_PEAK, Period.SHOULDER}

    soc = battery.state(battery.soc_min_kwh)
    total_cost = 0.0
    total_load = 0.0
    simulated = 0
    fallback = 0
    n = len(ds)
    for i, rec in enumerate(ds.records):
        t = rec.timestamp
        if not rec.present:
            fallback += 1
            if trace is not None:
                trace.append(TraceRow(t.isoformat(), "gap", 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, soc.soc_kwh, 0.0))
            continue
        L, P = rec.load_kwh, rec.pv_kwh
        period, t_h, f_h = tariff.rates_at(t)
        mode = kind.value
        if kind is StrategyKind.NO_SOLAR:
            flows = HourlyFlows(L, 0.0, 0.0, 0.0, soc)
        elif kind is StrategyKind.NO_BATTERY:
            net = L - P
            flows = HourlyFlows(max(net, 0.0), max(-net, 0.0), 0.0, 0.0, soc)
        elif kind is StrategyKind.AUTOMATIC:
            flows = automatic_step(battery, soc, L, P)
        else:
            flows, mode, fell_back = _forecast_hour(
                ds, i, n, t, period, soc, L, P, tariff, battery, opts, produce, load_q, pv_q, allowed
            )
            fallback += fell_back
        c = hour_cost(t_h, f_h, flows)
        total_cost += c
        total_load += L
        simulated += 1
        soc = flows.soc_end
        if trace is not None:
            trace.append(
                TraceRow(
                    t.isoformat(), mode, L, P, flows.import_kwh, flows.export_kwh,
                    flows.discharge_kwh, flows.charge_kwh, soc.soc_kwh, c,
                )
            )
    return CostReport(total_cost, total_load, simulated, fallback, n)


def _forecast_hour(ds, i, n, t, period, soc, L, P, tariff, battery, opts, produce, load_q, pv_q, allowed):
    """Flows for one hour of a forecast strategy: (flows, mode label, fallback 0/1)."""
    if t.weekday() >= 5 or period not in allowed:
        return automatic_step(battery, soc, L, P), "automatic", 0
    horizon = min(opts.horizon_h, n - i)
    fc = produce(t, horizon)
    if not fc.available[0]:
        return automatic_step(battery, soc, L, P), "fallback", 1
    inst = build_instance(
        tariff, fc, t, soc, battery, horizon,
        load_quantile=load_q, pv_quantile=pv_q,
        import_limit_kwh=opts.import_limit_kwh, export_limit_kwh=opts.export_limit_kwh,
    )
    sched = solve(inst)
    if sched.status != "optimal":
        log.warning("%s %s: %s; running automatic", ds.site_id, t.isoformat(), sched.message)
        return automatic_step(battery, soc, L, P), "fallback", 1
    cmd = first_command(sched)
    if cmd.mode is Mode.AUTOMATIC:
        return automatic_step(battery, soc, L, P), "lp-automatic", 0
    q, r = clamp_command(battery, soc, cmd)
    return settle(battery, soc, L, P, q, r), f"lp-{cmd.mode.value}", 0


@dataclass
class MatrixResult:
    tariffs: list[str]
    strategies: list[StrategyKind]
    sites: list[str]
    # reports[tariff][strategy][site]
    reports: dict[str, dict[StrategyKind, dict[str, CostReport]]] = field(default_factory=dict)
    # traces[(tariff, strategy, site)], filled only when requested
    traces: dict[tuple[str, StrategyKind, str], list[TraceRow]] = field(default_factory=dict)

    def cost_grid(self, weighted: bool = True) -> list[list[float]]:
        """Rows = tariffs, columns = strategies, cells = mean c/kWh across sites."""
        grid = []
        for tname in self.tariffs:
            row = []
            for s in self.strategies:
                reps = [self.reports[tname][s][site] for site in self.sites]
                if weighted:
                    load = sum(r.total_load_kwh for r in reps)
                    row.append(sum(r.total_cost_c for r in reps) / load if load > 0 else float("nan"))
                else:
                    row.append(float(np.mean([r.cost_c_per_kwh for r in reps])))
            grid.append(row)
        return grid

    def save_counts(self) -> list[list[int]]:
        """Rows = tariffs, columns = forecast strategies: sites cheaper than automatic."""
        grid = []
        for tname in self.tariffs:
            auto = self.reports[tname][StrategyKind.AUTOMATIC]
            grid.append(
                [
                    sum(
                        self.reports[tname][s][site].total_cost_c < auto[site].total_cost_c
                        for site in self.sites
                    )
                    for s in self.save_count_strategies
                ]
            )
        return grid

    @property
    def save_count_strategies(self) -> list[StrategyKind]:
        return [s for s in self.strategies if s in FORECAST_STRATEGIES]


def _run_site(args):
    ds, nwp, tariffs, strategies, battery, opts, forest, keep_traces = args
    qf = None
    if nwp is not None and any(s in QUANTILE_STRATEGIES for s in strategies):
        qf = QuantileForecaster(ds, nwp, forest)
    out: dict[str, dict[StrategyKind, CostReport]] = {}
    traces: dict[tuple[str, StrategyKind], list[TraceRow]] = {}
    for tariff in tariffs:
        out[tariff.name] = {}
        for s in strategies:
            trace: list[TraceRow] | None = [] if keep_traces else None
            out[tariff.name][s] = simulate(ds, tariff, battery, s, options=opts, quantile_forecaster=qf, trace=trace)
            if trace is not None:
                traces[(tariff.name, s)] = trace
    return ds.site_id, out, traces


def simulate_matrix(
    datasets: Sequence[InverterDataset],
    tariffs: Sequence[TariffSchedule],
    strategies: Iterable[StrategyKind | str],
    *,
    battery: BatteryConfig | None = None,
    nwp: Sequence[NwpTable | None] | None = None,
    options: SimOptions | None = None,
    forest: ForestParams | None = None,
    jobs: int = 1,
    keep_traces: bool = False,
) -> MatrixResult:
    """Every (site, tariff, strategy) cell. Automatic is always run for save counts."""
    kinds = [parse_strategy(s) if isinstance(s, str) else s for s in strategies]
    if not datasets or not tariffs or not kinds:
        raise SimulationError("need at least one dataset, tariff and strategy")
    names = [d.site_id for d in datasets]
    if len(set(names)) != len(names):
        raise SimulationError("site ids must be unique")
    run = list(kinds)
    if StrategyKind.AUTOMATIC not in run:
        run.append(StrategyKind.AUTOMATIC)
    battery = battery or BatteryConfig()
    nwps = list(nwp) if nwp is not None else [None] * len(datasets)
    if len(nwps) != len(datasets):
        raise SimulationError("need one NWP table (or None) per dataset")
    jobs_args = [(d, w, list(tariffs), run, battery, options, forest, keep_traces) for d, w in zip(datasets, nwps)]
    if jobs > 1 and len(datasets) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_site, jobs_args))
    else:
        results = [_run_site(a) for a in jobs_args]
    res = MatrixResult([t.name for t in tariffs], kinds, names)
    for tname in res.tariffs:
        res.reports[tname] = {s: {} for s in run}
    for site, per_tariff, traces in results:
        for tname, per_strategy in per_tariff.items():
            for s, rep in per_strategy.items():
                res.reports[tname][s][site] = rep
        for (tname, s), trace in traces.items():
            res.traces[(tname, s, site)] = trace
    return res


def price_ratio(tariff: TariffSchedule) -> float:
    """Sum of peak plus shoulder hourly prices over a week, divided by the off-peak sum."""
    prices, _ = tariff.week_table()
    periods = tariff.week_periods()
    off = sum(p for p, per in zip(prices, periods) if per is Period.OFF_PEAK)
    on = sum(p for p, per in zip(prices, periods) if per is not Period.OFF_PEAK)
    return float(on / off) if off > 0 else float("inf")
