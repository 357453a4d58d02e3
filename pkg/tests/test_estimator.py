import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from nowcast.errors import DomainError, FormatError, ShapeError
from nowcast.estimator import (
    EstimateSeries,
    accumulate,
    calibrate_mu_d,
    direct_mean,
    indirect_mean,
    nsum_mean,
    read_estimate,
    smooth,
    unweighted_ma,
    weighted_ma,
    write_estimate,
)
from nowcast.survey import ResponseBatch, SurveyConfig, run_survey
from nowcast.timeseries import TimeSeries


def batch(day, counts, degrees=None, flags=None):
    return ResponseBatch(day, counts, degrees, flags)


def series(values, counts, method="Ind"):
    return EstimateSeries(0, values, counts, method)


@st.composite
def estimate_series(draw, equal_counts=False, max_len=25):
    n = draw(st.integers(1, max_len))
    values = draw(st.lists(st.floats(0, 50, allow_nan=False), min_size=n, max_size=n))
    if equal_counts:
        counts = [draw(st.integers(1, 20))] * n
    else:
        counts = draw(st.lists(st.integers(1, 20), min_size=n, max_size=n))
    return series(values, counts)


def test_accumulate_identity():
    batches = [batch(t, [t, 1.0]) for t in range(4)]
    assert accumulate(batches, 1) == batches


def test_accumulate_concatenates():
    out = accumulate([batch(0, [1, 2, 3]), batch(1, [4, 5, 6, 7, 8])], 2)
    assert len(out) == 1 and out[0].n_t == 8
    assert list(out[0].indirect_counts) == [1, 2, 3, 4, 5, 6, 7, 8]


def test_accumulate_flags_trailing_partial_bin():
    out = accumulate([batch(t, [1.0]) for t in range(15)], 7)
    assert [b.n_t for b in out] == [7, 7, 1]
    assert [b.day for b in out] == [0, 1, 2]
    assert [b.partial for b in out] == [False, False, True]


def test_accumulate_bins_use_absolute_origin():
    out = accumulate([batch(t, [1.0]) for t in range(3, 10)], 7)
    assert [b.day for b in out] == [0, 1]
    assert [b.partial for b in out] == [True, True]


def test_accumulate_rejects_empty():
    with pytest.raises(ShapeError):
        accumulate([], 3)


def test_mean_examples():
    e = indirect_mean([batch(0, [2, 4]), batch(1, [0, 0, 0])])
    assert list(e.values) == [3, 0] and list(e.counts) == [2, 3]
    assert (e.method, e.smoothing) == ("Ind", "NoS")
    assert direct_mean([batch(0, [0] * 4, flags=[1, 0, 1, 0])]).values[0] == 0.5
    assert direct_mean([batch(0, [0] * 3, flags=[1, 1, 1])]).values[0] == 1


def test_nsum_examples():
    assert nsum_mean([batch(0, [2, 3], [4, 6])]).values[0] == 0.5
    assert nsum_mean([batch(0, [3, 7], [3, 7])]).values[0] == 1
    assert nsum_mean([batch(0, [0, 0], [3, 7])]).values[0] == 0


def test_nsum_zero_degree_policy():
    batches = [batch(0, [1, 0], [2, 0]), batch(1, [0], [0])]
    with pytest.raises(DomainError, match="degree 0"):
        nsum_mean(batches)
    e = nsum_mean(batches, drop_zero_degree=True)
    assert e.values[0] == 0.5 and e.counts[0] == 1
    assert e.missing[1] and e.counts[1] == 0
    with pytest.raises(ShapeError):
        nsum_mean([batch(0, [1, 2])])


def test_indirect_mean_tracks_degree_times_fraction():
    f = TimeSeries(0, np.full(200, 0.2))
    batches = run_survey(f, SurveyConfig(d=5, n_d=60, n=100, seed=3))
    counts = np.concatenate([b.indirect_counts for b in batches])
    degrees = np.concatenate([b.degrees for b in batches])
    ratio = counts / degrees.mean()
    se = ratio.std(ddof=1) / np.sqrt(ratio.size)
    assert abs(ratio.mean() - 0.2) < 3 * se


def test_direct_mean_binomial():
    rng = np.random.default_rng(0)
    flags = rng.random(10_000) < 0.3
    value = direct_mean([batch(0, np.zeros(10_000), flags=flags)]).values[0]
    assert abs(value - 0.3) < 3 * np.sqrt(0.21 / 10_000)


def test_moving_average_examples():
    e = series([1.0, 3.0], [1, 3])
    assert list(weighted_ma(e, 1).values) == [2.5, 2.5]
    assert list(weighted_ma(e, 1).counts) == [4, 4]
    assert unweighted_ma(series([0.0, 3.0, 6.0], [1, 1, 1]), 1).values[1] == 3
    for fn in (weighted_ma, unweighted_ma):
        out = fn(e, 0)
        assert np.array_equal(out.values, e.values)


def test_missing_bins_get_zero_weight():
    e = series([1.0, np.nan, 5.0], [2, 0, 2])
    wa = weighted_ma(e, 1)
    assert list(wa.values) == [1.0, 3.0, 5.0]
    assert list(unweighted_ma(e, 1).values) == [1.0, 3.0, 5.0]


def test_smooth_sets_tags():
    e = series([1.0, 2.0, 3.0], [1, 2, 3])
    assert smooth(e, "WA", 2).smoothing == "WA" and smooth(e, "WA", 2).w == 2
    assert smooth(e, "UA", 1).smoothing == "UA"
    assert smooth(e, "NoS", 4).w == 0
    with pytest.raises(ValueError):
        smooth(e, "EWMA", 1)


@settings(max_examples=200)
@given(estimate_series(equal_counts=True), st.integers(0, 30))
def test_weighted_equals_unweighted_for_equal_counts(e, w):
    assert np.array_equal(weighted_ma(e, w).values, unweighted_ma(e, w).values)


@given(st.integers(1, 30), st.floats(0, 100, allow_nan=False), st.lists(st.integers(1, 50), min_size=1, max_size=30))
def test_constants_are_preserved(w, c, counts):
    e = series([c] * len(counts), counts)
    assert np.all(weighted_ma(e, w).values == c)
    assert np.all(unweighted_ma(e, w).values == c)


@settings(max_examples=200)
@given(estimate_series(), st.integers(0, 30))
def test_output_within_input_range(e, w):
    for fn in (weighted_ma, unweighted_ma):
        out = fn(e, w).values
        assert out.min() >= e.values.min() and out.max() <= e.values.max()


@settings(max_examples=200)
@given(st.data())
def test_moving_averages_are_monotone(data):
    e = data.draw(estimate_series())
    bumps = data.draw(st.lists(st.floats(0, 10, allow_nan=False), min_size=len(e), max_size=len(e)))
    w = data.draw(st.integers(0, 10))
    higher = e.replace(values=e.values + np.array(bumps))
    for fn in (weighted_ma, unweighted_ma):
        assert np.all(fn(e, w).values <= fn(higher, w).values + 1e-12)


@settings(max_examples=200)
@given(estimate_series(), st.integers(0, 10), st.floats(0.01, 100))
def test_scaling_equivariance(e, w, c):
    scaled = e.replace(values=e.values * c)
    for fn in (weighted_ma, unweighted_ma):
        np.testing.assert_allclose(fn(scaled, w).values, c * fn(e, w).values, rtol=1e-12, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=7, max_size=42), st.integers(2, 7), st.integers(0, 2**31))
def test_accumulating_equals_weighting_within_bins(sizes, accum, seed):
    n_days = len(sizes) - len(sizes) % accum
    assume(n_days >= accum)
    rng = np.random.default_rng(seed)
    days = [batch(t, rng.integers(0, 5, size=sizes[t]).astype(float)) for t in range(n_days)]
    binned = indirect_mean(accumulate(days, accum), accum)
    daily = indirect_mean(days)
    expected = [
        np.average(daily.values[k : k + accum], weights=daily.counts[k : k + accum])
        for k in range(0, n_days, accum)
    ]
    np.testing.assert_allclose(binned.values, expected, rtol=1e-12)
    assert list(binned.counts) == [sum(sizes[k : k + accum]) for k in range(0, n_days, accum)]


def test_calibrate_mu_d_examples():
    e = EstimateSeries(4, [1.0, 1.5, 0.0], [3, 3, 3], "Ind")
    assert calibrate_mu_d(e, 0.1, 5) == pytest.approx(15)
    assert calibrate_mu_d(e, 0.1, 6) == 0
    with pytest.raises(DomainError):
        calibrate_mu_d(e, 0.0, 5)
    with pytest.raises(DomainError):
        calibrate_mu_d(e, 0.1, 9)


def test_calibrated_degree_matches_realized_degree():
    f = TimeSeries(0, np.full(10, 0.1))
    batches = run_survey(f, SurveyConfig(d=5, n_d=60, n=5000, seed=8))
    tau = max(range(10), key=lambda t: batches[t].n_t)
    mu = calibrate_mu_d(indirect_mean(batches), 0.1, tau)
    realized = batches[tau].degrees.mean()
    assert abs(mu - realized) <= 0.1 * realized


def test_series_invariants():
    with pytest.raises(DomainError):
        series([1.0, np.nan], [1, 1])
    with pytest.raises(DomainError):
        series([1.0, 2.0], [1, 0])
    with pytest.raises(ShapeError):
        series([1.0], [1, 2])
    with pytest.raises(DomainError):
        series([1.0], [1], method="Bayes")


def test_estimate_csv_round_trip(tmp_path):
    e = weighted_ma(EstimateSeries(3, [0.25, np.nan, 1 / 3], [4, 0, 2], "NSUM"), 1)
    path = tmp_path / "e.csv"
    write_estimate(e, path)
    back = read_estimate(path)
    assert back.start == 3 and back.method == "NSUM" and back.smoothing == "WA" and back.w == 1
    assert np.array_equal(back.values, e.values, equal_nan=True)
    assert np.array_equal(back.counts, e.counts)
    path.write_text("bin,value\n0,1\n")
    with pytest.raises(FormatError):
        read_estimate(path)
