"""Command-line entry points: simulate, schedule, forecast-eval, report, synth."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from housebatt.battery import BatteryConfig, BatteryError
from housebatt.forecasting.base import QUANTILES, ForecastError, ForecastSet
from housebatt.forecasting.features import NwpTable, load_nwp, write_nwp
from housebatt.forecasting.persistence import perfect, persistence_1h, persistence_24h
from housebatt.forecasting.qrf import ForestParams
from housebatt.forecasting.rolling import QuantileForecaster
from housebatt.lp import DEFAULT_GRID_LIMIT_KWH, ScheduleError, build_instance, solve
from housebatt.metrics import MetricError, error_report, percentile_table
from housebatt.sim import (
    STRATEGIES,
    TABLE_LABELS,
    TRACE_HEADER,
    MatrixResult,
    SimOptions,
    SimulationError,
    StrategyKind,
    parse_strategy,
    price_ratio,
    simulate_matrix,
)
from housebatt.synthetic import make_site
from housebatt.tariff import BUNDLED, TariffError, TariffSchedule, load_tariff
from housebatt.timeseries import DatasetError, InverterDataset, eligibility, load_dataset, write_dataset

log = logging.getLogger("housebatt")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
HOURS_PER_YEAR = 8760
EVAL_MODELS = ("qrf", "persistence", "persist_1h", "perfect")
TABLE_COLUMNS = ("Load NMAE", "Load NRMSE", "PV NMAE", "PV NRMSE")

RUNTIME_ERRORS = (
    DatasetError,
    TariffError,
    BatteryError,
    ForecastError,
    ScheduleError,
    SimulationError,
    MetricError,
    OSError,
)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    data: tuple[Path, ...]
    tariffs: tuple[str, ...]
    strategies: tuple[StrategyKind, ...]
    out: Path
    battery: BatteryConfig = field(default_factory=BatteryConfig)
    nwp: tuple[Path, ...] = ()
    seed: int = 0
    n_trees: int = 100
    jobs: int = 1
    options: SimOptions = field(default_factory=SimOptions)
    traces: bool = True
    weighted: bool = True

    def __post_init__(self) -> None:
        for p in self.data + self.nwp:
            if not p.is_file():
                raise UsageError(f"file not found: {p}")
        if self.nwp and len(self.nwp) != len(self.data):
            raise UsageError(f"got {len(self.data)} --data files but {len(self.nwp)} --nwp files")
        if any(s in (StrategyKind.Q50_50, StrategyKind.Q60_40) for s in self.strategies) and not self.nwp:
            raise UsageError("quantile strategies need --nwp for every --data file")
        if self.jobs < 1:
            raise UsageError("--jobs must be at least 1")


def _num(x: float) -> str:
    return f"{x:.6f}"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _battery_from(args: argparse.Namespace) -> BatteryConfig:
    return BatteryConfig(
        capacity_kwh=args.capacity,
        soc_min_kwh=args.soc_min,
        soc_max_kwh=args.soc_max,
        rate_limit_kwh=args.rate,
        loss_factor=args.loss,
        soh_penalty_c_per_kwh=args.soh_penalty,
    )


def _split(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _tariff_names(text: str) -> tuple[str, ...]:
    names = tuple(BUNDLED) if text.strip() == "all" else tuple(_split(text))
    if not names:
        raise UsageError("--tariff needs at least one name or path")
    return names


def _strategies(text: str) -> tuple[StrategyKind, ...]:
    try:
        kinds = tuple(STRATEGIES) if text.strip() == "all" else tuple(parse_strategy(s) for s in _split(text))
    except SimulationError as exc:
        raise UsageError(str(exc)) from None
    if not kinds:
        raise UsageError("--strategies needs at least one strategy")
    if len(set(kinds)) != len(kinds):
        raise UsageError("--strategies lists a strategy twice")
    return kinds


# --- simulate -------------------------------------------------------------------


def write_simulation(res: MatrixResult, datasets: Sequence[InverterDataset], tariffs: Sequence[TariffSchedule], cfg: RunConfig) -> None:
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    names = [s.value for s in res.strategies]
    grid = res.cost_grid(weighted=cfg.weighted)
    _write_csv(out / "costs.csv", ["tariff", *names], [[t, *map(_num, row)] for t, row in zip(res.tariffs, grid)])
    save = res.save_count_strategies
    _write_csv(
        out / "savecounts.csv",
        ["tariff", *(s.value for s in save)],
        [[t, *row] for t, row in zip(res.tariffs, res.save_counts())],
    )
    by_site = []
    for t in res.tariffs:
        for s in res.strategies:
            for site in res.sites:
                r = res.reports[t][s][site]
                by_site.append(
                    [t, site, s.value, _num(r.total_cost_c), _num(r.total_load_kwh), _num(r.cost_c_per_kwh),
                     r.hours_simulated, r.hours_automatic_fallback]
                )
    _write_csv(
        out / "costs_by_site.csv",
        ["tariff", "site", "strategy", "total_cost_c", "total_load_kwh", "cost_c_per_kwh", "hours_simulated", "hours_fallback"],
        by_site,
    )
    if cfg.traces:
        for (t, s, site), rows in sorted(res.traces.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2])):
            d = out / "traces" / site / t
            d.mkdir(parents=True, exist_ok=True)
            _write_csv(
                d / f"{s.value}.csv",
                TRACE_HEADER,
                [
                    [r.timestamp, r.mode, *map(_num, (r.load_kwh, r.pv_kwh, r.import_kwh, r.export_kwh,
                                                       r.discharge_kwh, r.charge_kwh, r.soc_kwh, r.cost_c))]
                    for r in rows
                ],
            )
    _write_plots(res, datasets, tariffs, out / "plots")


def _write_plots(res: MatrixResult, datasets: Sequence[InverterDataset], tariffs: Sequence[TariffSchedule], out: Path) -> None:
    """Two-column text files: bill vs PV/load ratio, and savings vs tariff shape."""
    out.mkdir(parents=True, exist_ok=True)
    ratios = {ds.site_id: eligibility(ds).pv_load_ratio for ds in datasets if ds.present.any()}
    first = res.tariffs[0]
    for s in res.strategies:
        rows = []
        for site in sorted(res.sites, key=lambda x: (ratios.get(x, float("nan")), x)):
            r = res.reports[first][s][site]
            annual = r.total_cost_c * HOURS_PER_YEAR / r.hours_simulated if r.hours_simulated else float("nan")
            rows.append([_num(ratios.get(site, float("nan"))), _num(annual)])
        _write_csv(out / f"bill_vs_pv_load_ratio_{first}_{s.value}.csv", ["pv_load_ratio", "annual_cost_c"], rows)
    by_name = {t.name: t for t in tariffs}
    for s in res.save_count_strategies:
        rows = []
        for t in res.tariffs:
            auto = sum(r.total_cost_c for r in res.reports[t][StrategyKind.AUTOMATIC].values())
            cost = sum(r.total_cost_c for r in res.reports[t][s].values())
            saving = 100.0 * (auto - cost) / abs(auto) if auto else float("nan")
            x = by_name[t].feed_in + price_ratio(by_name[t])
            rows.append((x, saving))
        rows.sort()
        _write_csv(
            out / f"savings_vs_tariff_{s.value}.csv",
            ["feed_in_plus_price_ratio", "saving_pct"],
            [[_num(x), _num(y)] for x, y in rows],
        )


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = RunConfig(
        data=tuple(Path(p) for p in args.data),
        tariffs=_tariff_names(args.tariff),
        strategies=_strategies(args.strategies),
        out=Path(args.out),
        battery=_battery_from(args),
        nwp=tuple(Path(p) for p in args.nwp or ()),
        seed=args.seed,
        n_trees=args.trees,
        jobs=args.jobs,
        options=SimOptions(
            import_limit_kwh=args.import_limit,
            export_limit_kwh=args.export_limit,
            optimize_periods=args.optimize_periods,
            force=args.force,
        ),
        traces=not args.no_traces,
        weighted=not args.unweighted,
    )
    tariffs = [load_tariff(t) for t in cfg.tariffs]
    if len({t.name for t in tariffs}) != len(tariffs):
        raise UsageError("tariff names must be unique")
    datasets = [load_dataset(p) for p in cfg.data]
    nwps: list[NwpTable | None] = (
        [load_nwp(p, ds.utc_offset_minutes) for p, ds in zip(cfg.nwp, datasets)] if cfg.nwp else [None] * len(datasets)
    )
    res = simulate_matrix(
        datasets, tariffs, cfg.strategies,
        battery=cfg.battery, nwp=nwps, options=cfg.options,
        forest=ForestParams(n_trees=cfg.n_trees, seed=cfg.seed),
        jobs=cfg.jobs, keep_traces=cfg.traces,
    )
    write_simulation(res, datasets, tariffs, cfg)
    sys.stdout.write((cfg.out / "costs.csv").read_text(encoding="utf-8"))
    return EXIT_OK


# --- schedule -------------------------------------------------------------------


def read_forecast_csv(path: Path) -> ForecastSet:
    """``timestamp,series,q40,q50,q60`` with one load and one pv row per hour."""
    header = ("timestamp", "series", "q40", "q50", "q60")
    values: dict[str, dict[datetime, tuple[float, float, float]]] = {"load": {}, "pv": {}}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None or tuple(c.strip() for c in got) != header:
            raise ForecastError(f"{path}: line 1: expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 5:
                    raise ValueError(f"expected 5 fields, got {len(row)}")
                ts = datetime.fromisoformat(row[0].strip())
                if ts.tzinfo is None:
                    raise ValueError(f"timestamp {row[0]!r} lacks a UTC offset")
                series = row[1].strip()
                if series not in values:
                    raise ValueError(f"series must be load or pv, got {series!r}")
                if ts in values[series]:
                    raise ValueError(f"duplicate {series} row for {ts.isoformat()}")
                values[series][ts] = tuple(float(x) for x in row[2:])
            except ValueError as exc:
                raise ForecastError(f"{path}: line {lineno}: {exc}") from None
    if not values["load"]:
        raise ForecastError(f"{path}: no forecast rows")
    if set(values["load"]) != set(values["pv"]):
        raise ForecastError(f"{path}: load and pv rows cover different hours")
    times = sorted(values["load"])
    for a, b in zip(times, times[1:]):
        if b - a != timedelta(hours=1):
            raise ForecastError(f"{path}: forecast hours are not contiguous at {a.isoformat()}")
    quant = {s: {q: [values[s][t][k] for t in times] for k, q in enumerate(QUANTILES)} for s in values}
    return ForecastSet(times[0], len(times), quant["load"], quant["pv"])


def cmd_schedule(args: argparse.Namespace) -> int:
    fc = read_forecast_csv(Path(args.forecast))
    horizon = args.horizon or min(fc.horizon_h, 24)
    if horizon > fc.horizon_h:
        raise ForecastError(f"{args.forecast}: forecast covers {fc.horizon_h} h, need {horizon}")
    battery = _battery_from(args)
    tariff = load_tariff(args.tariff)
    start = fc.start
    if tariff.utc_offset_minutes is not None:
        start = start.astimezone(timezone(timedelta(minutes=tariff.utc_offset_minutes)))
    inst = build_instance(
        tariff, fc, start, battery.state(args.soc), battery, horizon,
        load_quantile=args.load_quantile, pv_quantile=args.pv_quantile,
        import_limit_kwh=args.import_limit, export_limit_kwh=args.export_limit,
    )
    sch = solve(inst)
    if sch.status != "optimal":
        raise ScheduleError(f"no feasible schedule: {sch.message}")
    sys.stdout.write(sch.to_csv())
    log.info("objective %.6f c", sch.objective_c)
    return EXIT_OK


# --- forecast-eval --------------------------------------------------------------


def evaluate_site(ds: InverterDataset, model: str, nwp: NwpTable | None, params: ForestParams) -> dict[str, float]:
    """NMAE and NRMSE of the median forecast after the first training window.

    Forecasts are issued at each local midnight for the following 24 hours.
    """
    first = params.window_days * 24
    if len(ds) < first + 24:
        raise ForecastError(
            f"dataset {ds.site_id!r} has {len(ds) / 24:.1f} days; need at least {params.window_days + 1}"
        )
    if model == "qrf":
        if nwp is None:
            raise UsageError("model qrf needs --nwp for every --data file")
        qf = QuantileForecaster(ds, nwp, params)
        produce = qf.forecast
    else:
        produce = {
            "persistence": lambda t, h: persistence_24h(ds, t, h, "both"),
            "persist_1h": lambda t, h: persistence_1h(ds, t, h),
            "perfect": lambda t, h: perfect(ds, t, h),
        }[model]
    i = first + (-ds.timestamp_at(first).hour) % 24
    pred = {"load": np.full(len(ds), np.nan), "pv": np.full(len(ds), np.nan)}
    while i < len(ds):
        h = min(24, len(ds) - i)
        fc = produce(ds.timestamp_at(i), h)
        ok = fc.available & ds.present[i : i + h]
        pred["load"][i : i + h] = np.where(ok, fc.load_q[0.5], np.nan)
        pred["pv"][i : i + h] = np.where(ok, fc.pv_q[0.5], np.nan)
        i += h
    actual = {"load": np.where(ds.present, ds.load, np.nan), "pv": np.where(ds.present, ds.pv, np.nan)}
    out = {}
    for series, label in (("load", "Load"), ("pv", "PV")):
        rep = error_report(actual[series], pred[series])
        out[f"{label} NMAE"] = rep.nmae
        out[f"{label} NRMSE"] = rep.nrmse
    return out


def cmd_forecast_eval(args: argparse.Namespace) -> int:
    data = [Path(p) for p in args.data]
    nwp_paths = [Path(p) for p in args.nwp or ()]
    for p in data + nwp_paths:
        if not p.is_file():
            raise UsageError(f"file not found: {p}")
    if nwp_paths and len(nwp_paths) != len(data):
        raise UsageError(f"got {len(data)} --data files but {len(nwp_paths)} --nwp files")
    params = ForestParams(n_trees=args.trees, seed=args.seed)
    columns: dict[str, list[float]] = {c: [] for c in TABLE_COLUMNS}
    per_site = []
    for k, p in enumerate(data):
        ds = load_dataset(p)
        nwp = load_nwp(nwp_paths[k], ds.utc_offset_minutes) if nwp_paths else None
        errs = evaluate_site(ds, args.model, nwp, params)
        per_site.append([ds.site_id, *(_num(errs[c]) for c in TABLE_COLUMNS)])
        for c in TABLE_COLUMNS:
            columns[c].append(errs[c])
    rows = percentile_table(columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["percentile", *TABLE_COLUMNS])
    for r in rows:
        w.writerow([r["percentile"], *(_num(r[c]) for c in TABLE_COLUMNS)])
    text = buf.getvalue()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        _write_csv(out.with_name(out.stem + "_by_site.csv"), ["site", *TABLE_COLUMNS], per_site)
    sys.stdout.write(text)
    return EXIT_OK


# --- report ---------------------------------------------------------------------


def _read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    return rows[0], rows[1:]


def _label(col: str) -> str:
    try:
        return TABLE_LABELS[StrategyKind(col)]
    except ValueError:
        return col


def _render(title: str, header: list[str], rows: list[list[str]], digits: int | None) -> str:
    cells = [["Tariff", *(_label(c) for c in header[1:])]]
    for row in rows:
        vals = row[1:] if digits is None else [f"{float(v):.{digits}f}" for v in row[1:]]
        cells.append([row[0], *vals])
    widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
    lines = [title]
    for r in cells:
        lines.append("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines) + "\n"


def cmd_report(args: argparse.Namespace) -> int:
    run = Path(args.run)
    header, rows = _read_table(run / "costs.csv")
    text = _render("Cost by tariff (c/kWh)", header, rows, args.digits)
    header, rows = _read_table(run / "savecounts.csv")
    text += "\n" + _render("Sites where each approach costs less than automatic", header, rows, None)
    sys.stdout.write(text)
    return EXIT_OK


# --- synth ----------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds, nwp = make_site(days=args.days, pv_load_ratio=args.ratio, seed=args.seed, site_id=args.site)
    write_dataset(ds, out / f"{args.site}.csv")
    write_nwp(nwp, out / f"{args.site}_nwp.csv")
    return EXIT_OK


# --- wiring ---------------------------------------------------------------------


def _battery_flags(p: argparse.ArgumentParser) -> None:
    d = BatteryConfig()
    g = p.add_argument_group("battery")
    g.add_argument("--capacity", type=float, default=d.capacity_kwh, help="kWh (default %(default)s)")
    g.add_argument("--soc-min", type=float, default=d.soc_min_kwh, help="kWh (default %(default)s)")
    g.add_argument("--soc-max", type=float, default=d.soc_max_kwh, help="kWh (default %(default)s)")
    g.add_argument("--rate", type=float, default=d.rate_limit_kwh, help="kWh per hour (default %(default)s)")
    g.add_argument("--loss", type=float, default=d.loss_factor, help="per-direction loss (default %(default)s)")
    g.add_argument("--soh-penalty", type=float, default=0.0, help="c per kWh of throughput (default off)")


def _grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--import-limit", type=float, default=DEFAULT_GRID_LIMIT_KWH, help="kWh per hour")
    p.add_argument("--export-limit", type=float, default=DEFAULT_GRID_LIMIT_KWH, help="kWh per hour")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # route through the usage exit code with our own message
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="housebatt", description="Battery scheduling and strategy simulation for solar homes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="replay datasets under each tariff and strategy")
    p.add_argument("--tariff", required=True, help="comma-separated bundled names or YAML paths, or 'all'")
    p.add_argument("--data", required=True, action="append", help="site CSV (repeatable)")
    p.add_argument("--nwp", action="append", help="NWP CSV, one per --data in the same order")
    p.add_argument("--strategies", default="all", help="comma-separated strategy names, or 'all'")
    p.add_argument("--out", default="out", help="output directory (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="forest seed (default %(default)s)")
    p.add_argument("--trees", type=int, default=100, help="trees per forest (default %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes across sites")
    p.add_argument("--optimize-periods", choices=("non-peak", "off-peak"), default="non-peak")
    p.add_argument("--unweighted", action="store_true", help="plain mean of per-site c/kWh instead of load-weighted")
    p.add_argument("--force", action="store_true", help="simulate sites that fail the eligibility filter")
    p.add_argument("--no-traces", action="store_true", help="skip per-run trace files")
    _grid_flags(p)
    _battery_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("schedule", help="solve one LP from a forecast CSV and print the schedule")
    p.add_argument("--tariff", required=True, help="bundled name or YAML path")
    p.add_argument("--forecast", required=True, help="CSV: timestamp,series,q40,q50,q60")
    p.add_argument("--soc", type=float, required=True, help="initial state of charge, kWh")
    p.add_argument("--horizon", type=int, default=None, help="hours (default: forecast length, at most 24)")
    p.add_argument("--load-quantile", type=float, choices=QUANTILES, default=0.5)
    p.add_argument("--pv-quantile", type=float, choices=QUANTILES, default=0.5)
    _grid_flags(p)
    _battery_flags(p)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("forecast-eval", help="percentile table of day-ahead forecast errors across sites")
    p.add_argument("--data", required=True, action="append", help="site CSV (repeatable)")
    p.add_argument("--nwp", action="append", help="NWP CSV, one per --data (model qrf)")
    p.add_argument("--model", choices=EVAL_MODELS, default="qrf")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the table (and a per-site table) here")
    p.set_defaults(func=cmd_forecast_eval)

    p = sub.add_parser("report", help="pretty-print costs.csv and savecounts.csv from a simulate run")
    p.add_argument("run", help="simulate output directory")
    p.add_argument("--digits", type=int, default=2)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic site CSV and matching NWP CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--site", default="synthetic")
    p.add_argument("--days", type=int, default=90)
    p.add_argument("--ratio", type=float, default=0.8, help="PV/load energy ratio")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
