import pytest

from housebatt.tariff import (
    BUNDLED,
    Period,
    TariffError,
    flatten,
    load_tariff,
    parse_tariff,
    rates_at,
)

from conftest import at
from tariff_probes import EXPECTED, FEED_IN, PROBE_HOURS

TARIFF1 = """
name: t1
feed_in: 11.3
rates: {offpeak: 23.4, peak: 43.6}
rules:
  - {period: peak, days: Mon-Fri, start: 7, end: 23}
default: offpeak
"""

TARIFF6 = """
name: t6
feed_in: 12.5
rates: {offpeak: 15.2, shoulder: 25, peak: 54.9}
rules:
  - {period: peak, days: [Mon, Tue, Wed, Thu, Fri], start: 14, end: 20}
  - {period: off-peak, days: all, start: 22, end: 24}
  - {period: off-peak, days: all, start: 0, end: 7}
default: shoulder
"""


def test_tariff1_examples():
    ts = parse_tariff(TARIFF1)
    assert rates_at(ts, at(1, 10)) == (Period.PEAK, 43.6, 11.3)
    assert rates_at(ts, at(6, 10)) == (Period.OFF_PEAK, 23.4, 11.3)


def test_tariff6_example():
    ts = parse_tariff(TARIFF6)
    assert rates_at(ts, at(2, 15)) == (Period.PEAK, 54.9, 12.5)
    assert ts.period_at(at(5, 12)) is Period.SHOULDER
    assert ts.period_at(at(5, 23)) is Period.OFF_PEAK


def test_half_open_windows():
    ts = parse_tariff(TARIFF1)
    assert ts.period_at(at(0, 6)) is Period.OFF_PEAK
    assert ts.period_at(at(0, 7)) is Period.PEAK
    assert ts.period_at(at(0, 22)) is Period.PEAK
    assert ts.period_at(at(0, 23)) is Period.OFF_PEAK


def test_first_match_wins():
    ts = parse_tariff(
        """
name: overlap
feed_in: 5
rates: {offpeak: 10, shoulder: 20, peak: 30}
rules:
  - {period: peak, days: all, start: 10, end: 12}
  - {period: shoulder, days: all, start: 8, end: 14}
default: offpeak
"""
    )
    assert [ts.period_at(at(0, h)).value for h in (9, 10, 11, 12)] == ["shoulder", "peak", "peak", "shoulder"]


def test_uncovered_hours():
    with pytest.raises(TariffError, match="uncovered hours"):
        parse_tariff("name: x\nfeed_in: 1\nrates: {peak: 40}\nrules:\n  - {period: peak, days: all, start: 7, end: 23}\n")


def test_negative_price():
    with pytest.raises(TariffError, match="negative"):
        parse_tariff("name: x\nfeed_in: 1\nrates: {peak: -4}\ndefault: peak\n")


def test_start_not_before_end():
    with pytest.raises(TariffError, match="start"):
        parse_tariff(
            "name: x\nfeed_in: 1\nrates: {peak: 4, offpeak: 2}\ndefault: offpeak\n"
            "rules:\n  - {period: peak, days: all, start: 9, end: 9}\n"
        )


def test_missing_rate_for_used_period():
    with pytest.raises(TariffError, match="no rate"):
        parse_tariff("name: x\nfeed_in: 1\nrates: {peak: 4}\ndefault: shoulder\n")


def test_unknown_day():
    with pytest.raises(TariffError, match="unknown day"):
        parse_tariff(
            "name: x\nfeed_in: 1\nrates: {peak: 4, offpeak: 2}\ndefault: offpeak\n"
            "rules:\n  - {period: peak, days: [Funday], start: 1, end: 9}\n"
        )


def test_prices_kept_in_tenths():
    ts = parse_tariff(TARIFF1)
    assert ts.rates_tenths[Period.PEAK] == 436
    assert ts.feed_in_tenths == 113
    with pytest.raises(TariffError, match="decimal"):
        parse_tariff("name: x\nfeed_in: 1.25\nrates: {peak: 4}\ndefault: peak\n")


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_total_over_week(name):
    ts = load_tariff(name)
    periods = [ts.period_at(at(d, h)) for d in range(7) for h in range(24)]
    assert len(periods) == 168
    assert all(isinstance(p, Period) for p in periods)


@pytest.mark.parametrize("n", range(1, 11))
def test_bundled_reproduce_table(n):
    ts = load_tariff(f"tariff{n}")
    for (day, hour), (period, price) in zip(PROBE_HOURS, EXPECTED[n]):
        assert rates_at(ts, at(day, hour)) == (period, price, FEED_IN[n])


def test_tariff10_weekend_shoulder():
    ts = load_tariff("tariff10")
    assert ts.period_at(at(5, 6)) is Period.OFF_PEAK
    assert ts.period_at(at(5, 7)) is Period.SHOULDER
    assert ts.period_at(at(5, 21)) is Period.SHOULDER
    assert ts.period_at(at(5, 22)) is Period.OFF_PEAK


def test_flatten_keeps_windows():
    flat = flatten(load_tariff("tariff1"))
    assert flat.rates_at(at(1, 10)) == (Period.PEAK, 23.4, 11.3)


def test_load_from_path(tmp_path):
    p = tmp_path / "mine.yaml"
    p.write_text(TARIFF6)
    assert load_tariff(p).name == "t6"
    with pytest.raises(TariffError):
        load_tariff(tmp_path / "missing.yaml")
