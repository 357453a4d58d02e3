import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nowcast.errors import DomainError
from nowcast.estimator import EstimateSeries, weighted_ma
from nowcast.window import SmoothnessProfile, aggregated_estimate, smoothness_from_pilot


def oracle_thresholds(counts, w, eps_f1, eps_f2, eps_s1):
    """Both thresholds written out directly from their closed forms."""
    n = np.asarray(counts, dtype=float)
    centers = [t for t in range(w, n.size - w)] or list(range(n.size))
    share = [(n[t] / n[max(0, t - w) : t + w + 1].sum(), t) for t in centers]
    ratio = max(share)[0]
    cv = n.std() / n.mean()
    lam1 = lam2 = math.inf
    if w * eps_f1 < 1 and w * eps_s1 < 1:
        denom = 1 - (1 + w * eps_s1 / (1 - w * eps_s1)) * math.sqrt(ratio)
        if denom > 0:
            lam1 = (w * eps_f1 / (1 - w * eps_f1)) / denom
        g_f = w * (w + 1) * eps_f2 / 6 + eps_f1 * cv * w * eps_f1 / (1 - w * eps_f1)
        g_s = w * (w + 1) * eps_s1 / 6 + eps_s1 * cv * w * eps_s1 / (1 - w * eps_s1)
        denom = 1 - math.sqrt(ratio * (1 + g_s))
        if denom > 0:
            lam2 = g_f / denom
    return lam1, lam2


def oracle_search(counts, lam, w_init, eps_f1, eps_f2, eps_s1):
    for w in range(w_init, 0, -1):
        if min(oracle_thresholds(counts, w, eps_f1, eps_f2, eps_s1)) <= lam:
            return w
    return 0


def estimate(counts, values=None):
    counts = np.asarray(counts)
    values = np.ones(counts.size) if values is None else values
    return EstimateSeries(0, values, counts, "Ind")


def test_constant_truth_keeps_initial_window():
    e = estimate([100] * 30)
    result = aggregated_estimate(e, 0.05, 5, SmoothnessProfile(0, 0, 0.02))
    assert result.w_selected == 5 and result.satisfied
    assert result.lambda1 == 0


def test_unreachable_lambda_returns_unsmoothed():
    rng = np.random.default_rng(0)
    e = estimate([100] * 30, rng.uniform(0.5, 1.5, 30))
    result = aggregated_estimate(e, 1e-9, 5, SmoothnessProfile(0.02, 0.01, 0.02))
    assert result.w_selected == 0 and not result.satisfied
    assert result.estimate is e
    assert [w for w, _, _ in result.trace] == [5, 4, 3, 2, 1]


def test_uniform_counts_matches_exhaustive_search():
    counts = [100] * 40
    profile = SmoothnessProfile(0.02, 0.0, 0.02)
    result = aggregated_estimate(estimate(counts), 0.12, 5, profile)
    expected = oracle_search(counts, 0.12, 5, 0.02, 0.0, 0.02)
    assert result.w_selected == expected
    assert expected == 5


def test_selected_window_smooths_with_weights():
    rng = np.random.default_rng(1)
    e = estimate(rng.integers(50, 150, 40), rng.uniform(0.5, 1.5, 40))
    result = aggregated_estimate(e, 0.5, 4, SmoothnessProfile(0.01, 0.001, 0.01))
    assert result.satisfied
    assert np.array_equal(result.estimate.values, weighted_ma(e, result.w_selected).values)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(1, 300), min_size=3, max_size=40),
    st.floats(0, 0.2),
    st.floats(0, 0.05),
    st.floats(0, 0.2),
    st.floats(1e-3, 1),
    st.integers(1, 10),
)
def test_search_matches_oracle(counts, eps_f1, eps_f2, eps_s1, lam, w_init):
    profile = SmoothnessProfile(eps_f1, eps_f2, eps_s1)
    result = aggregated_estimate(estimate(counts), lam, w_init, profile)
    assert result.w_selected == oracle_search(counts, lam, w_init, eps_f1, eps_f2, eps_s1)
    assert 0 <= result.w_selected <= w_init
    if result.satisfied:
        assert min(result.lambda1, result.lambda2) <= lam


def test_search_is_deterministic():
    e = estimate([10, 20, 30, 40, 50] * 6)
    profile = SmoothnessProfile(0.01, 0.001, 0.01)
    assert aggregated_estimate(e, 0.2, 6, profile) == aggregated_estimate(e, 0.2, 6, profile)


def test_search_validation():
    e = estimate([10] * 10)
    with pytest.raises(DomainError):
        aggregated_estimate(e, 0.0, 3, SmoothnessProfile(0, 0, 0))
    with pytest.raises(DomainError):
        aggregated_estimate(e, 0.1, 0, SmoothnessProfile(0, 0, 0))


def test_pilot_constant():
    p = smoothness_from_pilot(estimate([50] * 20, np.full(20, 0.3)))
    assert (p.eps_f1, p.eps_f2, p.eps_s1) == (0, 0, 0)


def test_pilot_geometric():
    p = smoothness_from_pilot(estimate([50] * 40, 1.03 ** np.arange(40)))
    assert abs(p.eps_f1 - 0.03 * 1.5) < 1e-6


def test_pilot_noisy_constant():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        values = 1 + 0.1 * rng.standard_normal(60)
        hits += smoothness_from_pilot(estimate([200] * 60, values)).eps_f1 <= 0.1
    assert hits >= 95


def test_pilot_uses_variances_when_given():
    e = estimate([50] * 30, np.ones(30))
    p = smoothness_from_pilot(e, variances=1.02 ** np.arange(30))
    assert p.eps_f1 == 0 and abs(p.eps_s1 - 0.02 * 1.5) < 1e-6


def test_pilot_needs_positive_bins():
    with pytest.raises(DomainError):
        smoothness_from_pilot(estimate([5, 5, 5, 5], np.array([0.0, 0.0, 1.0, 1.0])))
