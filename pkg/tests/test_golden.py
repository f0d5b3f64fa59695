"""Full ten-tariff matrix on the bundled fixture against the frozen golden files."""

import csv
from pathlib import Path

import pytest

from housebatt.battery import BatteryConfig
from housebatt.forecasting.features import load_nwp
from housebatt.sim import STRATEGIES, SimOptions, simulate, simulate_matrix
from housebatt.tariff import BUNDLED, Period, load_tariff
from housebatt.timeseries import from_rows, load_dataset

from oracles import dp_perfect_sim

DATA = Path(__file__).parent / "data"


def read_golden(name: str) -> dict[str, dict[str, str]]:
    with (DATA / name).open(newline="") as fh:
        return {row.pop("tariff"): row for row in csv.DictReader(fh)}


@pytest.mark.slow
def test_ten_tariff_matrix_matches_golden():
    ds = load_dataset(DATA / "fixture.csv")
    nwp = load_nwp(DATA / "fixture_nwp.csv", ds.utc_offset_minutes)
    res = simulate_matrix([ds], [load_tariff(n) for n in BUNDLED], STRATEGIES, nwp=[nwp])
    costs = read_golden("golden_costs.csv")
    counts = read_golden("golden_savecounts.csv")
    for tname, row, saves in zip(res.tariffs, res.cost_grid(), res.save_counts()):
        assert list(costs[tname]) == [s.value for s in res.strategies]
        assert row == pytest.approx([float(v) for v in costs[tname].values()], abs=1e-5)
        assert saves == [int(v) for v in counts[tname].values()]
        # perfect foresight is the cheapest column in every row
        assert row[-1] == min(row)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["tariff1", "tariff6"])
def test_perfect_column_against_dp_replay(name):
    """Replay two weeks with the DP oracle standing in for the LP."""
    full = load_dataset(DATA / "fixture.csv")
    n = 14 * 24
    ds = from_rows("slice", [(full.timestamp_at(i), full.load[i], full.pv[i]) for i in range(n)], 600)
    tariff = load_tariff(name)
    times = [ds.timestamp_at(i) for i in range(n)]
    dp = dp_perfect_sim(
        ds.load, ds.pv, ds.present, times,
        rates=lambda t: tariff.rates_at(t)[1:],
        soc_min=1.3, soc_max=6.5, rate=4.6, loss=0.08,
        optimize=lambda t: t.weekday() < 5 and tariff.period_at(t) is not Period.PEAK,
    )
    lp = simulate(ds, tariff, BatteryConfig(), "perfect", options=SimOptions(force=True)).total_cost_c
    assert abs(dp - lp) <= max(0.5, 0.005 * abs(lp))
