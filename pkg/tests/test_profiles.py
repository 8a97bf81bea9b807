import statistics
from datetime import date, datetime, timezone
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chainprofiler import profiles
from chainprofiler.errors import EmptyInput, MissingDay
from chainprofiler.ingest import Transaction
from chainprofiler.profiles import FeatureConfig

A = "0x" + "a" * 40
B = "0x" + "b" * 40
DAY0 = 1_600_041_600  # 2020-09-14 00:00 UTC


def tx(i, ts, gas=10**9, frm=A, internal=False):
    return Transaction(f"0x{i:064x}", i, ts, frm, B, 1, gas, 21000, internal)


def test_time_of_day_against_datetime():
    stamps = [DAY0 + 3600 * 2 + 60, DAY0 + 86400 + 3600 * 13, DAY0 + 3600 * 23 + 3599, DAY0 + 3600 * 4]
    f = profiles.time_of_day_features([tx(i, t) for i, t in enumerate(stamps)], FeatureConfig(b_hour=6))
    hours = []
    for t in stamps:
        d = datetime.fromtimestamp(t, tz=timezone.utc)
        hours.append(d.hour + d.minute / 60 + d.second / 3600)
    assert f.values[0] == pytest.approx(statistics.mean(hours))
    assert f.values[1] == pytest.approx(statistics.median(hours))
    assert f.values[2] == pytest.approx(statistics.pstdev(hours))
    # 6 bins of 4 hours: 2:01 and 4:00 split across bins 0 and 1, 13:00 in 3, 23:59 in 5
    assert list(f.values[3:]) == [0.25, 0.25, 0.0, 0.25, 0.0, 0.25]


def test_single_transaction_has_zero_std():
    f = profiles.time_of_day_features([tx(1, DAY0 + 5 * 3600)])
    assert f.values[2] == 0.0 and len(f) == 3 + 6


def test_empty_inputs():
    with pytest.raises(EmptyInput):
        profiles.time_of_day_features([])
    with pytest.raises(EmptyInput):
        profiles.normalized_gas_features([], {})


def test_daily_average_is_exact_and_skips_internal_and_zero():
    txs = [tx(1, DAY0, gas=1), tx(2, DAY0 + 5, gas=2), tx(3, DAY0 + 9, gas=2, internal=True),
           tx(4, DAY0 + 10, gas=0), tx(5, DAY0 + 86400, gas=7)]
    s = profiles.daily_average_gas_price(txs)
    assert s == {date(2020, 9, 14): Fraction(3, 2), date(2020, 9, 15): Fraction(7)}


def test_gas_ratio_clipping_and_missing_day():
    series = {date(2020, 9, 14): Fraction(10**9)}
    ratios = [0.5, 1.0, 1.0, 4.99, 9.0]
    txs = [tx(i, DAY0 + i, gas=int(r * 10**9)) for i, r in enumerate(ratios)]
    f = profiles.normalized_gas_features(txs, series, FeatureConfig(b_gas=5, gas_clip=5.0))
    assert f.values[0] == pytest.approx(np.mean(ratios))
    assert f.values[1] == pytest.approx(1.0)
    # the 9x outlier moves the mean but not the histogram
    assert list(f.values[3:]) == [0.25, 0.5, 0.0, 0.0, 0.25]
    with pytest.raises(MissingDay):
        profiles.normalized_gas_features([tx(9, DAY0 + 86400)], series)


def test_build_profiles_roles():
    txs = [tx(1, DAY0 + 3600), tx(2, DAY0 + 7200, frm=B), tx(3, DAY0 + 9000, internal=True)]
    tod, gas = profiles.build_profiles(txs, [A, B])
    # B received two (one internal) and sent one self-transfer, which counts once
    assert set(tod) == {A, B}
    assert tod[B].values[0] == pytest.approx((1 + 2 + 2.5) / 3)
    # the internal call is not a sent transaction for the gas profile
    assert gas[A].values[0] == pytest.approx(1.0)
    assert set(gas) == {A, B}


def test_concat_and_kinds():
    a = profiles.FeatureVector(A, "timeofday", [1, 2])
    b = profiles.FeatureVector(A, "embedding", [3])
    assert list(profiles.concat_features(a, b).values) == [1, 2, 3]
    with pytest.raises(ValueError):
        profiles.concat_features(a, profiles.FeatureVector(B, "embedding", [3]))
    with pytest.raises(ValueError):
        profiles.FeatureVector(A, "colour", [1])
    with pytest.raises(ValueError):
        profiles.FeatureVector(A, "concat", [float("nan")])


def test_feature_and_gas_files_round_trip(tmp_path):
    feats = [profiles.FeatureVector(A, "timeofday", [0.1, 1 / 3]), profiles.FeatureVector(B, "timeofday", [2, 3])]
    profiles.write_features(tmp_path / "f.csv", feats)
    back = profiles.read_features(tmp_path / "f.csv", "timeofday")
    assert np.array_equal(back[A].values, feats[0].values)
    series = {date(2020, 1, 2): Fraction(7, 3), date(2020, 1, 1): Fraction(5)}
    profiles.write_daily_gas(tmp_path / "g.csv", series)
    assert profiles.read_daily_gas(tmp_path / "g.csv") == series


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 10**7), min_size=1, max_size=40), st.integers(1, 24))
def test_time_histogram_is_a_distribution(offsets, bins):
    f = profiles.time_of_day_features([tx(i, DAY0 + o) for i, o in enumerate(offsets)], FeatureConfig(b_hour=bins))
    hist = f.values[3:]
    assert len(hist) == bins
    assert hist.sum() == pytest.approx(1.0)
    assert 0 <= f.values[0] < 24 and 0 <= f.values[1] < 24
