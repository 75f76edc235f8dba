import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from climrisk.errors import DataError
from climrisk.ingest import (
    DailyRecord,
    WeeklySeries,
    aggregate_weekly,
    build_features,
    parse_column,
    parse_daily_csv,
    read_scenario_csv,
    read_weekly_csv,
    split_train_test,
    write_daily_csv,
    write_scenario_csv,
    write_weekly_csv,
)

D0 = dt.date(2002, 1, 1)


def days(precip, claims=None, start=D0):
    claims = [0.0] * len(precip) if claims is None else claims
    return [DailyRecord(start + dt.timedelta(days=i), float(p), float(c))
            for i, (p, c) in enumerate(zip(precip, claims))]


def weekly(x, d=None, n=None):
    k = len(x)
    d = x if d is None else d
    n = np.zeros(k) if n is None else n
    return WeeklySeries([D0 + dt.timedelta(weeks=i) for i in range(k)], x, d, n)


def write(tmp_path, text, name="daily.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_parse_three_rows(tmp_path):
    p = write(tmp_path, "date,precip_mm,claims\n2002-01-01,1.5,0\n2002-01-02,0,2\n2002-01-03,3,1\n")
    recs = parse_daily_csv(p)
    assert [r.date.day for r in recs] == [1, 2, 3]
    assert [r.precip_mm for r in recs] == [1.5, 0.0, 3.0]
    assert [r.claims for r in recs] == [0.0, 2.0, 1.0]


def test_parse_negative_precip_names_line(tmp_path):
    p = write(tmp_path, "date,precip_mm,claims\n2002-01-01,1,0\n2002-01-02,-1,0\n")
    with pytest.raises(DataError, match="line 3"):
        parse_daily_csv(p)


def test_parse_normalizes_by_insured(tmp_path):
    p = write(tmp_path, "date,precip_mm,claims,insured\n2002-01-01,0,4,2000\n")
    assert parse_daily_csv(p)[0].claims == pytest.approx(4 / 2000)
    assert parse_daily_csv(p)[0].claims == pytest.approx(0.002)


@pytest.mark.parametrize("body, msg", [
    ("2002-01-02,1,0\n2002-01-01,1,0\n", "not after"),
    ("2002-01-01,1\n", "expected 3 fields"),
    ("2002-01-01,abc,0\n", "cannot parse"),
    ("01/01/2002,1,0\n", "bad date"),
])
def test_parse_rejects(tmp_path, body, msg):
    p = write(tmp_path, "date,precip_mm,claims\n" + body)
    with pytest.raises(DataError, match=msg):
        parse_daily_csv(p)


def test_parse_rejects_bad_header(tmp_path):
    with pytest.raises(DataError, match="header"):
        parse_daily_csv(write(tmp_path, "day,rain,claims\n"))


def test_daily_roundtrip(tmp_path):
    recs = days([0.1, 2.0, 3.25], [1.0, 0.0, 0.5])
    write_daily_csv(tmp_path / "d.csv", recs)
    assert parse_daily_csv(tmp_path / "d.csv") == recs


def test_weekly_sum_and_max():
    w = aggregate_weekly(days(range(1, 8)))
    assert len(w) == 1
    assert w.x[0] == 28
    assert w.d[0] == 7


def test_all_zero_week():
    w = aggregate_weekly(days([0] * 7))
    assert (w.x[0], w.d[0], w.n[0]) == (0, 0, 0)


def test_partial_trailing_week_dropped():
    w = aggregate_weekly(days(range(10)))
    assert len(w) == 1
    assert w.week_start == [D0]


def test_too_few_days():
    with pytest.raises(DataError):
        aggregate_weekly(days(range(6)))


def test_gap_is_an_error():
    recs = days(range(14))
    del recs[5]
    with pytest.raises(DataError, match="contiguous"):
        aggregate_weekly(recs)


def test_week_origin_before_first_date_skips_partial_block():
    recs = days(range(16), start=D0 + dt.timedelta(days=3))
    w = aggregate_weekly(recs, week_origin=D0)
    # the block starting at D0 is incomplete; next block starts D0 + 7
    assert w.week_start == [D0 + dt.timedelta(days=7)]
    assert w.x[0] == sum(range(4, 11))


def test_week_origin_after_first_date_rejected():
    with pytest.raises(DataError):
        aggregate_weekly(days(range(14)), week_origin=D0 + dt.timedelta(days=1))


def test_sum_mode():
    w = aggregate_weekly(days([0] * 7, [1, 2, 3, 4, 5, 6, 7]), mode="sum")
    assert w.n[0] == 28
    w = aggregate_weekly(days([0] * 7, [1, 2, 3, 4, 5, 6, 7]))
    assert w.n[0] == 4


@settings(max_examples=50, deadline=None)
@given(c=st.floats(0, 1e3), weeks=st.integers(1, 5))
def test_constant_series_roundtrip(c, weeks):
    w = aggregate_weekly(days([c] * (7 * weeks), [c] * (7 * weeks)))
    np.testing.assert_allclose(w.x, 7 * c, rtol=1e-14)
    np.testing.assert_allclose(w.d, c, rtol=0)
    np.testing.assert_allclose(w.n, c, rtol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 500), min_size=7, max_size=60))
def test_daily_max_never_exceeds_weekly_total(precip):
    w = aggregate_weekly(days(precip))
    assert np.all(w.d <= w.x)


def test_weekly_csv_roundtrip(tmp_path):
    w = weekly(np.array([1.0, 2.5, 3.0]), np.array([1.0, 2.0, 1.5]), np.array([0.1, 0.2, 0.3]))
    write_weekly_csv(tmp_path / "w.csv", w)
    back = read_weekly_csv(tmp_path / "w.csv")
    assert back.week_start == w.week_start
    np.testing.assert_array_equal(back.x, w.x)
    np.testing.assert_array_equal(back.n, w.n)


def test_scenario_csv_roundtrip(tmp_path):
    a = weekly(np.array([1.0, 2.0]), np.array([0.5, 1.0]))
    b = weekly(np.array([3.0, 4.0]), np.array([3.0, 2.0]))
    write_scenario_csv(tmp_path / "s.csv", {"m1": a, "m2": b})
    back = read_scenario_csv(tmp_path / "s.csv", allowed_ids={"m1", "m2"})
    assert list(back) == ["m1", "m2"]
    np.testing.assert_array_equal(back["m2"].d, b.d)
    assert np.all(np.isnan(back["m1"].n))
    with pytest.raises(DataError, match="unknown scenario_id"):
        read_scenario_csv(tmp_path / "s.csv", allowed_ids={"m1"})


@pytest.mark.parametrize("name, expected", [
    ("X_t", ("X", 0)), ("D_t-3", ("D", 3)), ("X_{t-1}", ("X", 1)), ("D_{t−5}", ("D", 5)),
])
def test_parse_column(name, expected):
    assert parse_column(name) == expected


@pytest.mark.parametrize("name", ["Y_t", "X_t+1", "precip", "X_t-6"])
def test_parse_column_rejects(name):
    with pytest.raises(DataError):
        parse_column(name)


def test_features_no_lag():
    f = build_features(weekly(np.arange(10.0)), ["X_t"])
    assert f.rows.shape == (10, 1)


def test_features_lag_trimming():
    f = build_features(weekly(np.arange(10.0)), ["X_t", "X_t-2"])
    assert len(f) == 8
    assert f.columns == ["X_t", "X_t-2"]


def test_features_shift_identity():
    x = np.arange(10.0) ** 2
    f = build_features(weekly(x), ["X_t", "X_t-1"])
    # row for week 5 (0-based) sits at index 5 - max_lag
    assert f.rows[5 - 1, 1] == x[4]
    assert f.week_start[4] == D0 + dt.timedelta(weeks=5)


def test_features_drop_leading_aligns():
    f = build_features(weekly(np.arange(10.0)), ["X_t"], drop_leading=2)
    assert len(f) == 8
    with pytest.raises(DataError):
        build_features(weekly(np.arange(10.0)), ["X_t-3"], drop_leading=2)


def test_features_scaler_uses_training_rows_only():
    rng = np.random.default_rng(0)
    x = rng.gamma(2.0, 5.0, 100)
    d = x * rng.uniform(0.2, 1.0, 100)
    f = build_features(weekly(x, d), ["X_t", "X_t-1", "D_t"], train_fraction=0.8)
    train, test = split_train_test(f, 0.8)
    z = train.design()
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(z.var(axis=0), 1, atol=1e-9)
    assert abs(test.design().mean()) > 1e-6


def test_features_errors():
    with pytest.raises(DataError):
        build_features(weekly(np.arange(10.0)), ["Q_t"])
    with pytest.raises(DataError):
        build_features(weekly(np.arange(10.0)), ["X_t-7"])


def test_features_deterministic():
    x = np.random.default_rng(1).random(30)
    a = build_features(weekly(x), ["X_t", "D_t-1"])
    b = build_features(weekly(x), ["X_t", "D_t-1"])
    assert a.rows.tobytes() == b.rows.tobytes()
    assert a.scaler_mean.tobytes() == b.scaler_mean.tobytes()


def test_split_80_20():
    f = build_features(weekly(np.arange(100.0)), ["X_t"])
    tr, te = split_train_test(f, 0.8)
    assert (len(tr), len(te)) == (80, 20)
    assert max(tr.week_start) < min(te.week_start)


def test_split_ceiling_rule():
    f = build_features(weekly(np.arange(10.0)), ["X_t"])
    tr, te = split_train_test(f, 0.75)
    assert (len(tr), len(te)) == (8, 2)
    tr, te = split_train_test(f, 0.7)
    assert (len(tr), len(te)) == (7, 3)


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
def test_split_bounds(fraction):
    f = build_features(weekly(np.arange(10.0)), ["X_t"])
    with pytest.raises(DataError):
        split_train_test(f, fraction)
