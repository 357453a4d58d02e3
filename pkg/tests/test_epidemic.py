import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nowcast.epidemic import (
    SirConfig,
    config_from_dict,
    config_to_dict,
    hidden_fraction,
    is_multiwave,
    parse_config_text,
    peak_count,
    r0_schedule,
    read_trajectory,
    run_sir,
    select_multiwave,
    simulate,
    validate_config,
    write_trajectory,
)
from nowcast.errors import ConfigError
from nowcast.timeseries import TimeSeries


def test_no_transmission_decays_geometrically():
    traj = run_sir(np.zeros(50), recovery_rate=0.1, initial_infected=1e-3)
    assert np.all(traj.incidence.values[1:] == 0)
    expected = 1e-3 * 0.9 ** np.arange(50)
    np.testing.assert_allclose(traj.i.values, expected, rtol=1e-12)


def test_early_growth_matches_linearized_rate():
    traj = run_sir(np.full(200, 2.0), recovery_rate=0.1, initial_infected=1e-4)
    days = np.arange(5, 31)
    slope = np.polyfit(days, np.log(traj.i.values[days]), 1)[0]
    assert abs(slope - 0.1) <= 0.15 * 0.1


def test_default_config_selects_multiwave_run():
    traj = select_multiwave(SirConfig())
    inc = traj.incidence.values
    assert len(inc) == 600
    assert peak_count(inc, 0.1 * inc.max()) >= 2


def test_invalid_configs_name_the_field():
    assert list(validate_config(SirConfig())) == []
    with pytest.raises(ConfigError, match="r0_initial"):
        SirConfig(r0_initial=1.5)
    with pytest.raises(ConfigError, match="r0_low_range"):
        SirConfig(r0_low_range=(0.5, 1.1))
    with pytest.raises(ConfigError, match="r0_high_range"):
        SirConfig(r0_high_range=(0.9, 1.5))
    with pytest.raises(ConfigError, match="horizon_days"):
        SirConfig(horizon_days=20, intervention_ramp_days=14)


def test_r0_schedule_alternates_between_plateaus():
    config = SirConfig(seed=4)
    r0 = r0_schedule(config, np.random.default_rng(config.seed))
    assert r0[0] == config.r0_initial
    assert r0.size == config.horizon_days
    lo, hi = config.r0_low_range, config.r0_high_range
    assert r0.min() >= lo[0] - 1e-12
    # the schedule dips below 1 at least once and recovers above 1 afterwards
    below = np.flatnonzero(r0 < 1)
    assert below.size > 0
    assert np.any(r0[below[0]:] > 1)
    # linear ramps: no single step jumps by more than the largest plateau gap / ramp length
    max_step = (config.r0_initial - lo[0]) / config.intervention_ramp_days
    assert np.abs(np.diff(r0)).max() <= max_step + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conservation_and_monotonicity(seed):
    traj = simulate(SirConfig(seed=seed))
    total = traj.s.values + traj.i.values + traj.r.values
    assert np.abs(total - 1).max() <= 1e-9
    assert np.all(np.diff(traj.r.values) >= 0)
    assert np.all(np.diff(traj.s.values) <= 0)
    inc = traj.incidence.values
    assert np.all(inc >= 0)
    assert np.all(inc[1:] <= traj.s.values[:-1] + 1e-15)


def test_same_seed_is_bit_identical():
    a, b = simulate(SirConfig(seed=11)), simulate(SirConfig(seed=11))
    for name in ("s", "i", "r", "incidence", "r0"):
        assert np.array_equal(getattr(a, name).values, getattr(b, name).values)


def test_hidden_fraction_examples():
    traj = run_sir(np.full(30, 2.5), 0.1, 1e-3)
    assert hidden_fraction(traj, 1) == traj.incidence
    inc = np.zeros(10)
    inc[0] = 0.1
    pulse = dataclasses.replace(traj, incidence=TimeSeries(0, inc))
    assert list(hidden_fraction(pulse, 3).values) == [0.1, 0.1, 0.1] + [0.0] * 7


def test_hidden_fraction_constant_incidence():
    traj = run_sir(np.zeros(20), 0.1, 1e-3)
    # replace incidence with a constant to exercise the windowed sum
    const = dataclasses.replace(traj, incidence=TimeSeries(0, np.full(20, 0.01)))
    f = hidden_fraction(const, 7).values
    np.testing.assert_allclose(f[6:], 0.07, rtol=1e-12)
    np.testing.assert_allclose(f[:6], 0.01 * np.arange(1, 7), rtol=1e-12)


@pytest.mark.parametrize(
    "values, prominence, expected",
    [(np.arange(10.0), 0.1, 0), ([0, 1, 0, 1, 0], 0.5, 2), (np.exp(-((np.arange(100) - 50) / 10.0) ** 2), 0.1, 1)],
)
def test_peak_count_examples(values, prominence, expected):
    assert peak_count(values, prominence) == expected


def test_is_multiwave_on_single_wave():
    traj = run_sir(np.full(400, 2.5), 0.1, 1e-4)
    assert not is_multiwave(traj)


def test_trajectory_csv_round_trip(tmp_path):
    traj = simulate(SirConfig(seed=2, horizon_days=120))
    path = tmp_path / "traj.csv"
    write_trajectory(traj, path)
    back = read_trajectory(path)
    for name in ("s", "i", "r", "incidence", "r0"):
        assert getattr(back, name) == getattr(traj, name)


def test_config_text_and_dict_round_trip():
    text = "# comment\nr0_initial = 3.0\nr0_low_range = 0.4, 0.8\nseed = 9\n"
    config = parse_config_text(text)
    assert config.r0_initial == 3.0 and config.r0_low_range == (0.4, 0.8) and config.seed == 9
    assert config_from_dict(config_to_dict(config)) == config
    with pytest.raises(ConfigError, match="bogus"):
        parse_config_text("bogus = 1\n")
    with pytest.raises(ConfigError):
        config_from_dict({"bogus": 1})
