from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from housebatt.battery import BatteryConfig
from housebatt.tariff import load_tariff

AEST = timezone(timedelta(hours=10))


def at(day: int, hour: int) -> datetime:
    """2018-07-02 is a Monday; ``day`` counts from there."""
    return datetime(2018, 7, 2, tzinfo=AEST) + timedelta(days=day, hours=hour)


@pytest.fixture
def tariff1():
    return load_tariff("tariff1")


@pytest.fixture
def battery():
    return BatteryConfig()


# --- acceptance summary: one line per criterion ------------------------------

_CRITERIA: dict[str, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA[marker.args[0]] = (status, marker.args[1], detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k[2:])):
        status, title, detail = _CRITERIA[key]
        line = f"{key:<5} {status}  {title}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
