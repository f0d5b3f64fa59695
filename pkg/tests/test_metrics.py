import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from housebatt.metrics import (
    PERCENTILE_ROWS,
    MetricError,
    error_report,
    mape,
    nmae,
    nrmse,
    percentile_table,
    pinball,
)


def test_mape_example():
    assert mape([2, 4], [1, 5]) == pytest.approx(37.5, abs=1e-12)


def test_normalised_examples():
    assert nmae([2, 2], [1, 3]) == pytest.approx(0.5, abs=1e-12)
    assert nrmse([2, 2], [1, 3]) == pytest.approx(0.5, abs=1e-12)


def test_zero_forecast_scores_one():
    s = [1.0, 3.0, 0.5, 2.0]
    assert nmae(s, np.zeros(4)) == pytest.approx(1.0, abs=1e-12)
    assert nrmse(s, np.zeros(4)) == pytest.approx(1.0, abs=1e-12)


def test_perfect_forecast_scores_zero():
    s = [0.3, 1.2, 4.0]
    assert mape(s, s) == nmae(s, s) == nrmse(s, s) == 0.0


def test_pinball_examples():
    assert pinball([3.0], [1.0], 0.4) == pytest.approx(0.8, abs=1e-12)
    assert pinball([1.0], [3.0], 0.4) == pytest.approx(1.2, abs=1e-12)
    assert pinball([2.0, 2.0], [1.0, 3.0], 0.5) == pytest.approx(0.5, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0.1, 100), min_size=2, max_size=30),
    st.floats(0.01, 100),
    st.integers(0, 2**31),
)
def test_scale_invariance(actual, k, seed):
    s = np.array(actual)
    p = s * np.random.default_rng(seed).uniform(0.5, 1.5, s.size)
    for fn in (mape, nmae, nrmse):
        assert fn(s * k, p * k) == pytest.approx(fn(s, p), rel=1e-9, abs=1e-12)


def test_nan_pairs_dropped():
    assert nmae([2, np.nan, 2], [1, 7, 3]) == pytest.approx(0.5)
    assert error_report([2, 2, np.nan], [1, 3, 1]).n == 2


def test_undefined_cases():
    with pytest.raises(MetricError):
        mape([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(MetricError):
        nmae([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(MetricError):
        nrmse([0.0], [0.0])
    with pytest.raises(MetricError):
        nmae([1.0], [1.0, 2.0])
    with pytest.raises(MetricError):
        pinball([1.0], [1.0], 1.0)


def test_error_report_tolerates_zero_actuals():
    r = error_report([0.0, 2.0], [0.0, 1.0])
    assert math.isnan(r.mape)
    assert r.nmae == pytest.approx(0.5)


def test_percentile_table_shape():
    cols = {"Load NMAE": np.arange(11.0), "PV NMAE": [np.nan, 1.0, 3.0]}
    rows = percentile_table(cols)
    assert [r["percentile"] for r in rows] == list(PERCENTILE_ROWS)
    assert rows[0]["Load NMAE"] == 0.0 and rows[-1]["Load NMAE"] == 10.0
    assert rows[3]["Load NMAE"] == 5.0
    assert rows[3]["PV NMAE"] == 2.0
