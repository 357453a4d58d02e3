"""Day-indexed series container, differencing ratios, normalization and MAE."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, FormatError, NoOverlap, ShapeError


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Finite, non-negative values indexed by consecutive integer days.

    Parameters
    ----------
    start_day : int
        Day index of ``values[0]``.
    values : array_like
        One value per day. Copied into a read-only float array.
    """

    start_day: int
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float).reshape(-1)
        if arr.size < 1:
            raise ShapeError("a TimeSeries needs at least one value")
        if not np.all(np.isfinite(arr)):
            raise DomainError("TimeSeries values must be finite")
        if np.any(arr < 0):
            raise DomainError("TimeSeries values must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "start_day", int(self.start_day))

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.start_day == other.start_day and np.array_equal(self.values, other.values)

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.start_day, self.start_day + len(self))

    @property
    def end_day(self) -> int:
        """Last day covered (inclusive)."""
        return self.start_day + len(self) - 1

    def window(self, first_day: int, last_day: int) -> "TimeSeries":
        """Restrict to ``[first_day, last_day]`` intersected with the covered days."""
        lo = max(first_day, self.start_day)
        hi = min(last_day, self.end_day)
        if lo > hi:
            raise NoOverlap(f"no overlap between [{first_day}, {last_day}] and the series")
        return TimeSeries(lo, self.values[lo - self.start_day : hi - self.start_day + 1])


SeriesLike = Union[TimeSeries, Sequence[float], np.ndarray]


def as_series(s: SeriesLike, start_day: int = 0) -> TimeSeries:
    if isinstance(s, TimeSeries):
        return s
    return TimeSeries(start_day, np.asarray(s, dtype=float))


def _require_positive(s: TimeSeries) -> None:
    bad = np.flatnonzero(s.values <= 0)
    if bad.size:
        raise DomainError(f"series must be strictly positive; day {s.start_day + int(bad[0])} is zero")


def first_diff_ratio(s: SeriesLike) -> TimeSeries:
    """``|s[t+1] - s[t]| / s[t]`` for every consecutive pair.

    The result is indexed by the day of the denominator.
    """
    s = as_series(s)
    _require_positive(s)
    if len(s) < 2:
        raise ShapeError("first_diff_ratio needs at least two values")
    v = s.values
    return TimeSeries(s.start_day, np.abs(np.diff(v)) / v[:-1])


def second_diff_ratio(s: SeriesLike) -> TimeSeries:
    """``|s[t+1] - 2 s[t] + s[t-1]| / s[t]`` at interior days."""
    s = as_series(s)
    _require_positive(s)
    if len(s) < 3:
        raise ShapeError("second_diff_ratio needs at least three values")
    v = s.values
    return TimeSeries(s.start_day + 1, np.abs(v[2:] - 2.0 * v[1:-1] + v[:-2]) / v[1:-1])


def empirical_smoothness(s: SeriesLike) -> tuple[float, float]:
    """Smallest ``(eps1, eps2)`` for which the series satisfies both ratio bounds."""
    s = as_series(s)
    return float(first_diff_ratio(s).values.max()), float(second_diff_ratio(s).values.max())


def range_normalize(s: SeriesLike) -> TimeSeries:
    """Affinely map the series onto [0, 1]; a constant series maps to zeros."""
    s = as_series(s)
    v = s.values
    lo, hi = v.min(), v.max()
    if hi == lo:
        return TimeSeries(s.start_day, np.zeros_like(v))
    out = (v - lo) / (hi - lo)
    # guard against 1 + ulp from rounding
    return TimeSeries(s.start_day, np.clip(out, 0.0, 1.0))


def mae(a: SeriesLike, b: SeriesLike) -> float:
    a_v = as_series(a).values
    b_v = as_series(b).values
    if a_v.size != b_v.size:
        raise ShapeError(f"length mismatch: {a_v.size} vs {b_v.size}")
    return float(np.mean(np.abs(a_v - b_v)))


def format_float(x: float) -> str:
    """Shortest round-trip text for a float, so CSV output is byte-stable."""
    return repr(float(x))


def write_csv(s: TimeSeries, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["day", "value"])
        for day, value in zip(s.days, s.values):
            out.writerow([int(day), format_float(value)])


def read_csv(path: Union[str, Path]) -> TimeSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["day", "value"]:
            raise FormatError(f"{path}: expected header 'day,value', got {header}")
        days, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                days.append(int(row[0]))
                values.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not days:
        raise FormatError(f"{path}: no rows")
    if any(b != a + 1 for a, b in zip(days, days[1:])):
        raise FormatError(f"{path}: days must be consecutive increasing integers")
    return TimeSeries(days[0], np.array(values))
