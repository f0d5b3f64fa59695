from datetime import timedelta, timezone

import numpy as np
import pytest

from housebatt.automatic import HourlyFlows
from housebatt.battery import SOC_TOL
from housebatt.forecasting.qrf import ForestParams
from housebatt.forecasting.rolling import QuantileForecaster
from housebatt.sim import (
    FORECAST_STRATEGIES,
    STRATEGIES,
    SimOptions,
    SimulationError,
    StrategyKind,
    hour_cost,
    parse_strategy,
    price_ratio,
    simulate,
    simulate_matrix,
)
from housebatt.synthetic import make_site
from housebatt.tariff import load_tariff
from housebatt.timeseries import HourlyRecord, InverterDataset, from_rows

from conftest import at


@pytest.fixture(scope="module")
def small_site():
    return make_site(days=8, seed=5)


def flows(i=0.0, e=0.0):
    return HourlyFlows(i, e, 0.0, 0.0, None)


def test_hour_cost_examples(tariff1):
    _, t, f = tariff1.rates_at(at(0, 3))
    assert hour_cost(t, f, flows(i=1.0)) == pytest.approx(23.4)
    assert hour_cost(t, f, flows()) == 0.0
    assert hour_cost(t, f, flows(e=2.0)) == pytest.approx(-22.6)


def test_price_ratio(tariff1):
    assert price_ratio(tariff1) == pytest.approx(80 * 43.6 / (88 * 23.4))


def test_parse_strategy():
    assert parse_strategy("q60_40") is StrategyKind.Q60_40
    with pytest.raises(SimulationError, match="unknown strategy"):
        parse_strategy("clairvoyant")
    with pytest.raises(SimulationError):
        SimOptions(optimize_periods="sometimes")


@pytest.mark.parametrize("kind", STRATEGIES, ids=lambda s: s.value)
def test_trace_conserves_energy(small_site, tariff1, battery, kind):
    ds, nwp = small_site
    qf = QuantileForecaster(ds, nwp, ForestParams(n_trees=10))
    trace = []
    rep = simulate(ds, tariff1, battery, kind, quantile_forecaster=qf, trace=trace)
    assert len(trace) == len(ds) == rep.hours_total
    cost = 0.0
    prev = battery.soc_min_kwh
    for row in trace:
        pv = 0.0 if kind is StrategyKind.NO_SOLAR else row.pv_kwh
        balance = row.discharge_kwh - row.charge_kwh + row.import_kwh - row.export_kwh - (row.load_kwh - pv)
        assert abs(balance) <= 1e-9
        assert battery.soc_min_kwh - SOC_TOL <= row.soc_kwh <= battery.soc_max_kwh + SOC_TOL
        step = prev - row.discharge_kwh * (1 + battery.loss_factor) + row.charge_kwh * (1 - battery.loss_factor)
        assert row.soc_kwh == pytest.approx(step, abs=1e-9)
        assert row.import_kwh * row.export_kwh == 0
        assert row.discharge_kwh + row.charge_kwh <= battery.rate_limit_kwh + 1e-9
        prev = row.soc_kwh
        cost += row.cost_c
    assert rep.total_cost_c == pytest.approx(cost)
    assert rep.total_load_kwh == pytest.approx(float(ds.load.sum()))


def test_baseline_ordering(small_site, tariff1, battery):
    ds, _ = small_site
    cost = {k: simulate(ds, tariff1, battery, k).total_cost_c for k in ("no_solar", "no_battery", "automatic")}
    assert cost["no_battery"] <= cost["no_solar"]
    assert cost["automatic"] <= cost["no_battery"]


def test_automatic_never_exports_from_battery(small_site, tariff1, battery):
    ds, _ = small_site
    trace = []
    simulate(ds, tariff1, battery, "automatic", trace=trace)
    for row in trace:
        if row.export_kwh > 0:
            assert row.discharge_kwh == 0
        if row.import_kwh > 0:
            assert row.charge_kwh == 0


def test_peak_and_weekend_hours_run_automatic(small_site, tariff1, battery):
    ds, _ = small_site
    trace = []
    simulate(ds, tariff1, battery, "perfect", trace=trace)
    for i, row in enumerate(trace):
        t = ds.timestamp_at(i)
        if t.weekday() >= 5 or 7 <= t.hour < 23:
            assert row.mode == "automatic"
    assert any(r.mode.startswith("lp-") for r in trace)


def test_off_peak_option_restricts_optimisation(small_site, battery):
    ds, _ = small_site
    t6 = load_tariff("tariff6")
    trace = []
    simulate(ds, t6, battery, "perfect", options=SimOptions(optimize_periods="off-peak"), trace=trace)
    for i, row in enumerate(trace):
        if row.mode.startswith("lp-"):
            assert t6.period_at(ds.timestamp_at(i)).value == "off-peak"


def test_perfect_beats_automatic(small_site, tariff1, battery):
    ds, _ = small_site
    auto = simulate(ds, tariff1, battery, "automatic").total_cost_c
    assert simulate(ds, tariff1, battery, "perfect").total_cost_c < auto


def test_all_gap_dataset_forced(battery, tariff1):
    recs = tuple(HourlyRecord(at(0, h), 0.0, 0.0, present=False) for h in range(48))
    ds = InverterDataset("empty", recs, 600)
    with pytest.raises(SimulationError, match="no present records"):
        simulate(ds, tariff1, battery, "perfect")
    rep = simulate(ds, tariff1, battery, "perfect", options=SimOptions(force=True))
    assert rep.hours_simulated == 0
    assert rep.fallback_fraction == 1.0
    assert np.isnan(rep.cost_c_per_kwh)


def test_gap_hours_hold_soc(battery, tariff1):
    rows = [(at(0, h), 1.0, 2.5 if 9 <= h <= 15 else 0.0) for h in range(72) if h not in (30, 31)]
    ds = from_rows("g", rows, 600)
    trace = []
    rep = simulate(ds, tariff1, battery, "automatic", trace=trace)
    assert rep.hours_automatic_fallback == 2
    assert trace[30].mode == "gap" and trace[30].soc_kwh == trace[29].soc_kwh


def test_ineligible_dataset_rejected(battery, tariff1):
    rows = [(at(0, h), 1.0, 0.0) for h in range(48)]
    ds = from_rows("dark", rows, 600)
    with pytest.raises(SimulationError, match="not eligible"):
        simulate(ds, tariff1, battery, "automatic")
    assert simulate(ds, tariff1, battery, "automatic", options=SimOptions(force=True)).hours_simulated == 48


def test_timezone_mismatch(battery, tariff1):
    awst = timezone(timedelta(hours=8))
    rows = [(at(0, h).replace(tzinfo=awst), 1.0, 0.5) for h in range(48)]
    ds = from_rows("perth", rows, 480)
    with pytest.raises(SimulationError, match="UTC offset"):
        simulate(ds, tariff1, battery, "automatic")


def test_quantile_strategy_needs_forecaster(small_site, tariff1, battery):
    ds, _ = small_site
    with pytest.raises(SimulationError, match="NWP"):
        simulate(ds, tariff1, battery, "q50_50")


def test_matrix_shape_and_counts(battery):
    sites = [make_site(days=8, seed=s, site_id=f"s{s}") for s in (1, 2)]
    tariffs = [load_tariff("tariff1"), load_tariff("tariff2")]
    kinds = ["no_battery", "pv_persist", "perfect"]
    res = simulate_matrix([d for d, _ in sites], tariffs, kinds, battery=battery)
    grid = res.cost_grid()
    assert len(grid) == 2 and all(len(r) == 3 for r in grid)
    assert res.save_count_strategies == [StrategyKind.PV_PERSIST, StrategyKind.PERFECT]
    counts = res.save_counts()
    assert all(0 <= c <= 2 for row in counts for c in row)
    assert counts[0][1] == 2  # perfect beats automatic on both sites
    solo = simulate(sites[0][0], tariffs[0], battery, "perfect")
    assert res.reports["tariff1"][StrategyKind.PERFECT]["s1"] == solo
    unweighted = res.cost_grid(weighted=False)
    assert unweighted[0][2] == pytest.approx(
        np.mean([res.reports["tariff1"][StrategyKind.PERFECT][s].cost_c_per_kwh for s in ("s1", "s2")])
    )
    parallel = simulate_matrix([d for d, _ in sites], tariffs, kinds, battery=battery, jobs=2)
    assert parallel.cost_grid() == grid


def test_matrix_rejects_duplicate_sites(small_site, tariff1):
    ds, _ = small_site
    with pytest.raises(SimulationError, match="unique"):
        simulate_matrix([ds, ds], [tariff1], ["automatic"])


def test_forecast_strategy_set():
    assert StrategyKind.AUTOMATIC not in FORECAST_STRATEGIES
    assert len(FORECAST_STRATEGIES) == 7
