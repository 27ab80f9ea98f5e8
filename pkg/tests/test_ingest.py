import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvartarch.errors import (
    DegenerateSeries,
    MissingColumn,
    MissingInput,
    NonMonotonicTimestamps,
    UnparsableRow,
)
from pvartarch.ingest import (
    HourlyPanel,
    apply_standardization,
    destandardize,
    load_panel,
    normalize_dst,
    standardize,
)

HEADER = "timestamp,price_eur_mwh,load_mw,wind_mw,solar_mw\n"


def write(tmp_path, rows, header=HEADER, name="data.csv"):
    path = tmp_path / name
    path.write_text(header + "".join(r + "\n" for r in rows))
    return path


def instants(start, n, tz="Europe/Berlin"):
    return pd.date_range(pd.Timestamp(start, tz=tz), periods=n, freq="h")


def aware_panel(stamps, rng):
    n = len(stamps)
    wind, solar = rng.uniform(0, 100, n), rng.uniform(0, 50, n)
    return HourlyPanel(stamps, rng.normal(40, 10, n), rng.uniform(1e4, 2e4, n), wind + solar, wind, solar)


def test_four_rows_sum_renewables(tmp_path):
    rows = [f"2012-01-10T0{h}:00:00+01:00,{30 + h},{5000 + h},{10 * h},{h}" for h in range(4)]
    panel = load_panel(write(tmp_path, rows))
    assert panel.n == 4
    np.testing.assert_array_equal(panel.renewables, panel.wind + panel.solar)
    np.testing.assert_array_equal(panel.renewables, [0, 11, 22, 33])


def test_duplicate_timestamp(tmp_path):
    rows = ["2012-01-10T00:00:00+01:00,1,1,1,1", "2012-01-10T00:00:00+01:00,1,1,1,1"]
    with pytest.raises(NonMonotonicTimestamps):
        load_panel(write(tmp_path, rows))


def test_gap_rejected(tmp_path):
    rows = ["2012-01-10T00:00:00+01:00,1,1,1,1", "2012-01-10T02:00:00+01:00,1,1,1,1"]
    with pytest.raises(NonMonotonicTimestamps):
        load_panel(write(tmp_path, rows))


def test_missing_wind_column(tmp_path):
    path = write(tmp_path, ["2012-01-10T00:00:00+01:00,1,1,1"], header="timestamp,price_eur_mwh,load_mw,solar_mw\n")
    with pytest.raises(MissingColumn) as err:
        load_panel(path)
    assert err.value.column == "wind"


def test_unparsable_row_reports_line(tmp_path):
    rows = ["2012-01-10T00:00:00+01:00,1,1,1,1", "2012-01-10T01:00:00+01:00,abc,1,1,1"]
    with pytest.raises(UnparsableRow) as err:
        load_panel(write(tmp_path, rows))
    assert err.value.row == 3


def test_negative_load_rejected(tmp_path):
    with pytest.raises(UnparsableRow):
        load_panel(write(tmp_path, ["2012-01-10T00:00:00+01:00,1,-5,1,1"]))


def test_negative_price_allowed(tmp_path):
    panel = load_panel(write(tmp_path, ["2012-01-10T00:00:00+01:00,-20.5,1,1,1"]))
    assert panel.price[0] == -20.5


def test_missing_file():
    with pytest.raises(MissingInput) as err:
        load_panel("/nonexistent/data.csv")
    assert "--data" in str(err.value)


def test_unsorted_rows_are_sorted(tmp_path):
    rows = ["2012-01-10T01:00:00+01:00,2,1,1,1", "2012-01-10T00:00:00+01:00,1,1,1,1"]
    panel = load_panel(write(tmp_path, rows))
    np.testing.assert_array_equal(panel.price, [1, 2])


def test_march_transition_fills_midpoint(rng):
    stamps = instants("2012-03-24 00:00", 72)
    panel = aware_panel(stamps, rng)
    out = normalize_dst(panel)
    day = out.timestamps.normalize() == pd.Timestamp("2012-03-25")
    assert day.sum() == 24
    k = int(np.flatnonzero(out.timestamps == pd.Timestamp("2012-03-25 02:00"))[0])
    for name in ("price", "load", "renewables", "wind", "solar"):
        v = getattr(out, name)
        assert v[k] == pytest.approx(0.5 * (v[k - 1] + v[k + 1]))
    assert out.dst[k] and out.dst[k + 1] and not out.dst[k - 1]


def test_october_transition_keeps_first_duplicate(rng):
    stamps = instants("2012-10-27 00:00", 73)
    panel = aware_panel(stamps, rng)
    out = normalize_dst(panel)
    assert (out.timestamps.normalize() == pd.Timestamp("2012-10-28")).sum() == 24
    wall = stamps.tz_localize(None)
    first = int(np.flatnonzero(wall == pd.Timestamp("2012-10-28 02:00"))[0])
    k = int(np.flatnonzero(out.timestamps == pd.Timestamp("2012-10-28 02:00"))[0])
    assert out.price[k] == panel.price[first]
    assert out.dst[k]


def test_no_transition_identity(rng):
    stamps = instants("2012-01-10 00:00", 100)
    panel = aware_panel(stamps, rng)
    out = normalize_dst(panel)
    np.testing.assert_array_equal(out.price, panel.price)
    assert (out.timestamps == stamps.tz_localize(None)).all()
    assert not out.dst.any()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 400), st.integers(24, 24 * 40))
def test_normalize_idempotent_and_gapless(offset, n):
    rng = np.random.default_rng(offset)
    stamps = instants("2012-02-20 00:00", n + offset)[offset:]
    once = normalize_dst(aware_panel(stamps, rng))
    twice = normalize_dst(once)
    assert (np.diff(once.timestamps.asi8) == 3600 * 10**9).all()
    np.testing.assert_array_equal(once.price, twice.price)
    np.testing.assert_array_equal(once.dst, twice.dst)
    assert (once.load >= 0).all() and (once.renewables >= 0).all()


def test_complete_days_give_24_hours_each(rng):
    # one spring transition inside: a complete span has one instant less
    stamps = instants("2012-03-20 00:00", 24 * 220 - 1)
    out = normalize_dst(aware_panel(stamps, rng))
    days = (out.timestamps[-1].normalize() - out.timestamps[0].normalize()).days + 1
    assert out.n == 24 * days


def test_standardize_known_values():
    stamps = pd.date_range("2012-01-01", periods=3, freq="h")
    panel = HourlyPanel(stamps, np.array([1.0, 2, 3]), np.array([1.0, 2, 3]), np.array([2.0, 4, 6]))
    out = standardize(panel)
    np.testing.assert_allclose(out.price, [-1, 0, 1])
    assert out.standardization["price"] == pytest.approx((2.0, 1.0))


def test_standardize_degenerate():
    stamps = pd.date_range("2012-01-01", periods=3, freq="h")
    panel = HourlyPanel(stamps, np.ones(3), np.array([1.0, 2, 3]), np.array([1.0, 2, 3]))
    with pytest.raises(DegenerateSeries):
        standardize(panel)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 300), st.floats(-1e4, 1e4), st.floats(0.01, 1e4))
def test_standardize_roundtrip(n, loc, scale):
    rng = np.random.default_rng(n)
    stamps = pd.date_range("2012-01-01", periods=n, freq="h")
    panel = HourlyPanel(stamps, loc + scale * rng.standard_normal(n), rng.uniform(0, 1e4, n), rng.uniform(0, 1e3, n))
    z = standardize(panel)
    # cancellation error grows with the level-to-spread ratio
    tol = 1e-12 * (1 + abs(loc) / scale)
    for name in ("price", "load", "renewables"):
        v = getattr(z, name)
        assert abs(v.mean()) < max(tol, 1e-10)
        assert abs(v.var(ddof=1) - 1) < max(tol, 1e-10)
    back = destandardize(z)
    np.testing.assert_allclose(back.price, panel.price, rtol=1e-9, atol=1e-9 * scale)
    again = standardize(z)
    np.testing.assert_allclose(again.price, z.price, atol=max(tol, 1e-10))


def test_apply_standardization_uses_stored_stats(rng):
    stamps = pd.date_range("2012-01-01", periods=50, freq="h")
    panel = HourlyPanel(stamps, rng.normal(size=50), rng.uniform(1, 2, 50), rng.uniform(1, 2, 50))
    stats = standardize(panel).standardization
    other = apply_standardization(panel.slice(10, 20), stats)
    np.testing.assert_allclose(other.price, (panel.price[10:20] - stats["price"][0]) / stats["price"][1])
