"""Discrete-time SIR model with smoothly switching reproduction number.

Interventions ramp R0 linearly down to a plateau below one; relaxations ramp
it back up above one. Alternating the two yields multi-wave incidence, which
serves as the ground-truth hidden population for survey simulations.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.signal import find_peaks

from .errors import ConfigError, FormatError
from .timeseries import TimeSeries, format_float


@dataclass(frozen=True)
class SirConfig:
    """Parameters of a multi-wave SIR run.

    None of the defaults come from observed epidemics; they are tunable
    values chosen to produce several waves within the horizon.

    Attributes
    ----------
    population : int
        Population size N. The model works in fractions; N only sets the
        smallest meaningful fraction ``1/N``.
    r0_initial : float
        Reproduction number before the first intervention (must exceed 2).
    recovery_rate : float
        Daily recovery probability of an infectious individual.
    horizon_days : int
        Number of simulated days.
    intervention_count_range : tuple of int
        Inclusive range for the number of interventions (low-R0 phases).
    intervention_ramp_days : int
        Length of every linear R0 ramp.
    r0_low_range, r0_high_range : tuple of float
        Ranges for the plateau values drawn after each intervention or
        relaxation.
    initial_infected_fraction : float
        Infectious fraction on day 0.
    seed : int
        Seed for the switch times and plateau values.
    """

    population: int = 1_000_000
    r0_initial: float = 2.5
    recovery_rate: float = 0.1
    horizon_days: int = 600
    intervention_count_range: tuple[int, int] = (3, 6)
    intervention_ramp_days: int = 28
    r0_low_range: tuple[float, float] = (0.5, 0.9)
    r0_high_range: tuple[float, float] = (1.3, 2.0)
    initial_infected_fraction: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        problems = list(validate_config(self))
        if problems:
            raise ConfigError("; ".join(problems))


def validate_config(c: SirConfig):
    """Yield one ``field: message`` string per violated constraint."""
    if int(c.population) < 1:
        yield "population: must be a positive integer"
    if not c.r0_initial > 2:
        yield "r0_initial: must be above 2"
    if not 0 < c.recovery_rate <= 1:
        yield "recovery_rate: must lie in (0, 1]"
    if int(c.horizon_days) < 1:
        yield "horizon_days: must be a positive integer"
    lo, hi = c.intervention_count_range
    if not 0 <= lo <= hi:
        yield "intervention_count_range: need 0 <= min <= max"
    if int(c.intervention_ramp_days) < 1:
        yield "intervention_ramp_days: must be a positive integer"
    elif c.horizon_days < 2 * c.intervention_ramp_days:
        yield "horizon_days: must be at least twice intervention_ramp_days"
    a, b = c.r0_low_range
    if not (0 <= a <= b < 1):
        yield "r0_low_range: need 0 <= min <= max < 1"
    a, b = c.r0_high_range
    if not (1 < a <= b):
        yield "r0_high_range: need 1 < min <= max"
    if not 0 < c.initial_infected_fraction < 1:
        yield "initial_infected_fraction: must lie in (0, 1)"


@dataclass(frozen=True, eq=False)
class EpidemicTrajectory:
    s: TimeSeries
    i: TimeSeries
    r: TimeSeries
    incidence: TimeSeries
    r0: TimeSeries
    seed: int = field(default=0)

    def __len__(self) -> int:
        return len(self.s)


def r0_schedule(config: SirConfig, rng: np.random.Generator) -> np.ndarray:
    """Daily R0 values alternating between high and low plateaus.

    Switch times are stratified over the horizon so consecutive ramps never
    overlap: with ``m`` switches the horizon is cut into ``m`` equal strata
    and one start day is drawn uniformly from the part of each stratum that
    leaves room for the full ramp.
    """
    horizon = config.horizon_days
    ramp = config.intervention_ramp_days
    lo, hi = config.intervention_count_range
    k = int(rng.integers(lo, hi + 1)) if hi > 0 else 0
    # every intervention but the last is followed by a relaxation
    m = max(2 * k - 1, 0)
    schedule = np.full(horizon, float(config.r0_initial))
    if m == 0:
        return schedule
    width = horizon / m
    starts = []
    for j in range(m):
        a = int(np.ceil(j * width))
        b = int(np.floor((j + 1) * width)) - ramp
        starts.append(int(rng.integers(a, b + 1)) if b > a else a)
    current = float(config.r0_initial)
    for j, start in enumerate(starts):
        band = config.r0_low_range if j % 2 == 0 else config.r0_high_range
        target = float(rng.uniform(*band))
        days = np.arange(start, horizon)
        progress = np.minimum((days - start + 1) / ramp, 1.0)
        schedule[start:] = current + (target - current) * progress
        current = target
    return schedule


def run_sir(r0: np.ndarray, recovery_rate: float, initial_infected: float, seed: int = 0) -> EpidemicTrajectory:
    """Euler-step the SIR fractions under a given daily R0 schedule.

    Day 0 holds the initial state; its incidence is the seeded infectious
    fraction. From day 1 on, ``incidence[t] = r0[t] * gamma * s[t-1] * i[t-1]``
    capped at ``s[t-1]``.
    """
    r0 = np.asarray(r0, dtype=float)
    horizon = r0.size
    gamma = float(recovery_rate)
    s = np.empty(horizon)
    i = np.empty(horizon)
    r = np.empty(horizon)
    inc = np.empty(horizon)
    s[0], i[0], r[0], inc[0] = 1.0 - initial_infected, initial_infected, 0.0, initial_infected
    for t in range(1, horizon):
        new = min(r0[t] * gamma * s[t - 1] * i[t - 1], s[t - 1])
        rec = gamma * i[t - 1]
        s[t] = s[t - 1] - new
        i[t] = i[t - 1] + new - rec
        r[t] = r[t - 1] + rec
        inc[t] = new
    # rounding can leave -1e-18 on an exhausted compartment
    return EpidemicTrajectory(
        s=TimeSeries(0, np.maximum(s, 0.0)),
        i=TimeSeries(0, np.maximum(i, 0.0)),
        r=TimeSeries(0, r),
        incidence=TimeSeries(0, inc),
        r0=TimeSeries(0, np.maximum(r0, 0.0)),
        seed=seed,
    )


def simulate(config: SirConfig) -> EpidemicTrajectory:
    rng = np.random.default_rng(config.seed)
    schedule = r0_schedule(config, rng)
    return run_sir(schedule, config.recovery_rate, config.initial_infected_fraction, seed=config.seed)


def peak_count(s, min_prominence: float) -> int:
    """Number of local maxima with prominence of at least ``min_prominence``."""
    if min_prominence <= 0:
        raise ValueError("min_prominence must be positive")
    values = s.values if isinstance(s, TimeSeries) else np.asarray(s, dtype=float)
    peaks, _ = find_peaks(values, prominence=min_prominence)
    return int(peaks.size)


def is_multiwave(traj: EpidemicTrajectory, min_waves: int = 2, rel_prominence: float = 0.1) -> bool:
    inc = traj.incidence.values
    return peak_count(inc, rel_prominence * inc.max()) >= min_waves


def select_multiwave(config: SirConfig, max_tries: int = 1000, min_waves: int = 2) -> EpidemicTrajectory:
    """Simulate successive seeds from ``config.seed`` until a multi-wave run appears.

    A run qualifies when its incidence has at least ``min_waves`` peaks with
    prominence of 10% of the global maximum. The accepted seed is stored on
    the returned trajectory.
    """
    for offset in range(max_tries):
        candidate = dataclasses.replace(config, seed=config.seed + offset)
        traj = simulate(candidate)
        if is_multiwave(traj, min_waves):
            return traj
    raise ConfigError(f"no multi-wave trajectory within {max_tries} seeds from {config.seed}")


def hidden_fraction(traj: EpidemicTrajectory, period: int) -> TimeSeries:
    """Fraction infected within the last ``period`` days, clamped to [0, 1]."""
    if period < 1:
        raise ValueError("period must be >= 1")
    inc = traj.incidence.values
    windowed = np.convolve(inc, np.ones(period))[: inc.size]
    return TimeSeries(traj.incidence.start_day, np.clip(windowed, 0.0, 1.0))


TRAJECTORY_HEADER = ["day", "s", "i", "r", "incidence", "r0"]


def write_trajectory(traj: EpidemicTrajectory, path: Union[str, Path]) -> None:
    cols = [traj.s.values, traj.i.values, traj.r.values, traj.incidence.values, traj.r0.values]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TRAJECTORY_HEADER)
        for t, day in enumerate(traj.s.days):
            out.writerow([int(day)] + [format_float(c[t]) for c in cols])


def read_trajectory(path: Union[str, Path]) -> EpidemicTrajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != TRAJECTORY_HEADER:
            raise FormatError(f"{path}: expected header {','.join(TRAJECTORY_HEADER)}")
        rows = [row for row in reader if row]
    if not rows:
        raise FormatError(f"{path}: no rows")
    try:
        data = np.array([[float(x) for x in row] for row in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    start = int(data[0, 0])
    return EpidemicTrajectory(*(TimeSeries(start, data[:, j]) for j in range(1, 6)))


_TUPLE_FIELDS = {"intervention_count_range": int, "r0_low_range": float, "r0_high_range": float}
_INT_FIELDS = {"population", "horizon_days", "intervention_ramp_days", "seed"}


def parse_config_text(text: str, base: SirConfig | None = None) -> SirConfig:
    """Parse a flat ``key = value`` file whose keys are SirConfig field names.

    Ranges are written ``min, max``. Omitted keys keep their defaults (or the
    values from ``base``). ``#`` starts a comment.
    """
    known = {f.name for f in dataclasses.fields(SirConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
        try:
            if key in _TUPLE_FIELDS:
                parts = [p.strip() for p in value.strip("()[]").split(",")]
                if len(parts) != 2:
                    raise ValueError("expected 'min, max'")
                values[key] = tuple(_TUPLE_FIELDS[key](p) for p in parts)
            elif key in _INT_FIELDS:
                values[key] = int(value)
            else:
                values[key] = float(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return dataclasses.replace(base or SirConfig(), **values)


def config_to_dict(config: SirConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(config).items()}


def config_from_dict(values: dict, base: SirConfig | None = None) -> SirConfig:
    """Inverse of :func:`config_to_dict`; unknown keys raise ConfigError."""
    known = {f.name for f in dataclasses.fields(SirConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown epidemic fields: {sorted(unknown)}")
    fields = {k: tuple(v) if k in _TUPLE_FIELDS else v for k, v in values.items()}
    try:
        return dataclasses.replace(base or SirConfig(), **fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
