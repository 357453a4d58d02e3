"""Real survey microdata and official case counts: parsing, cleaning, batching.

Survey CSV columns (ISO dates, empty cell = missing)::

    date,household_cli,household_size,community_cli,symptom_days,tested_positive,age_lt18,age_18_64,age_ge65

Reference CSV columns: ``date,cases``.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import FormatError
from .survey import ResponseBatch
from .timeseries import TimeSeries

SURVEY_HEADER = [
    "date",
    "household_cli",
    "household_size",
    "community_cli",
    "symptom_days",
    "tested_positive",
    "age_lt18",
    "age_18_64",
    "age_ge65",
]
NUMERIC_FIELDS = SURVEY_HEADER[1:]
CAPPED_FIELDS = ("household_cli", "age_lt18", "age_18_64", "age_ge65", "symptom_days")
CAP = 100

QUESTION_FIELDS = {
    "household": ("household_cli", "household_size"),
    "community": ("community_cli",),
    "direct": ("tested_positive",),
}
RULES = ("negative", "over_100", "inconsistent", "missing")


@dataclass(frozen=True)
class RawSurveyRow:
    date: dt.date
    household_cli: Optional[int] = None
    household_size: Optional[int] = None
    community_cli: Optional[int] = None
    symptom_days: Optional[int] = None
    tested_positive: Optional[int] = None
    age_lt18: Optional[int] = None
    age_18_64: Optional[int] = None
    age_ge65: Optional[int] = None

    @property
    def age_counts(self) -> tuple[Optional[int], Optional[int], Optional[int]]:
        return self.age_lt18, self.age_18_64, self.age_ge65


@dataclass
class FilterReport:
    rows_in: int = 0
    rows_out: int = 0
    removed_by_rule: dict = field(default_factory=lambda: {rule: 0 for rule in RULES})

    def reconciles(self) -> bool:
        return self.rows_in == self.rows_out + sum(self.removed_by_rule.values())

    def as_dict(self) -> dict:
        return {"rows_in": self.rows_in, "rows_out": self.rows_out, "removed_by_rule": dict(self.removed_by_rule)}


def _parse_date(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise FormatError(f"{where}: bad date {text!r}") from None


def _parse_int(text: str, where: str) -> Optional[int]:
    text = text.strip()
    if text == "" or text.upper() in ("NA", "NAN", "NULL"):
        return None
    try:
        value = float(text)
    except ValueError:
        raise FormatError(f"{where}: bad number {text!r}") from None
    if not value.is_integer():
        raise FormatError(f"{where}: expected an integer count, got {text!r}")
    return int(value)


def read_survey(path: Union[str, Path]) -> list[RawSurveyRow]:
    """Parse a survey CSV without any validation of the answers."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SURVEY_HEADER:
            raise FormatError(f"{path}: expected header {','.join(SURVEY_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            where = f"{path}:{lineno}"
            if len(rec) != len(SURVEY_HEADER):
                raise FormatError(f"{where}: expected {len(SURVEY_HEADER)} fields, got {len(rec)}")
            values = {name: _parse_int(cell, where) for name, cell in zip(NUMERIC_FIELDS, rec[1:])}
            rows.append(RawSurveyRow(_parse_date(rec[0], where), **values))
    return rows


def violated_rule(row: RawSurveyRow, required: Sequence[str] = ()) -> Optional[str]:
    """First cleaning rule the row breaks, or None.

    Rules in order: negative numeric answer; more than 100 household CLI
    cases, people in an age range, or symptom days; household CLI reported
    with zero symptom days or exceeding the household size; a missing value
    in one of ``required``.
    """
    values = {name: getattr(row, name) for name in NUMERIC_FIELDS}
    if any(v is not None and v < 0 for v in values.values()):
        return "negative"
    if any(values[name] is not None and values[name] > CAP for name in CAPPED_FIELDS):
        return "over_100"
    cli, size, days = row.household_cli, row.household_size, row.symptom_days
    if cli is not None and cli > 0 and days is not None and days == 0:
        return "inconsistent"
    if cli is not None and size is not None and cli > size:
        return "inconsistent"
    if any(values[name] is None for name in required):
        return "missing"
    return None


def outlier_filter(
    rows: Iterable[RawSurveyRow], required: Sequence[str] = ()
) -> tuple[list[RawSurveyRow], FilterReport]:
    """Drop rows breaking a cleaning rule; each drop is charged to the first rule hit."""
    report = FilterReport()
    kept = []
    for row in rows:
        report.rows_in += 1
        rule = violated_rule(row, required)
        if rule is None:
            kept.append(row)
        else:
            report.removed_by_rule[rule] += 1
    report.rows_out = len(kept)
    return kept, report


def to_batches(rows: Iterable[RawSurveyRow], question: str) -> list[ResponseBatch]:
    """Group filtered rows by date into day-sorted batches.

    ``household`` counts CLI cases in the household and uses household size
    as the degree; ``community`` counts cases in the community and carries no
    degree; ``direct`` carries only the respondent's own test result. Direct
    flags are attached whenever every row of a day answered the test
    question. Batch days are proleptic Gregorian ordinals.
    """
    if question not in QUESTION_FIELDS:
        raise ValueError(f"question must be one of {sorted(QUESTION_FIELDS)}")
    by_day: dict[int, list[RawSurveyRow]] = {}
    for row in rows:
        by_day.setdefault(row.date.toordinal(), []).append(row)
    batches = []
    for day in sorted(by_day):
        group = by_day[day]
        flags = [r.tested_positive for r in group]
        direct = None if any(f is None for f in flags) else [int(f > 0) for f in flags]
        if question == "household":
            counts, degrees = [r.household_cli for r in group], [r.household_size for r in group]
        elif question == "community":
            counts, degrees = [r.community_cli for r in group], None
        else:
            counts, degrees = None, None
        if counts is not None and any(c is None for c in counts):
            raise ValueError(f"day {dt.date.fromordinal(day)} has missing answers; filter with required fields first")
        batches.append(ResponseBatch(day, counts, degrees, direct))
    return batches


def required_fields(question: str) -> tuple[str, ...]:
    return QUESTION_FIELDS[question]


def rolling_mean(x: np.ndarray, width: int) -> np.ndarray:
    """Centered rolling mean with windows truncated at the ends."""
    if width <= 1:
        return x.copy()
    left = (width - 1) // 2
    right = width - 1 - left
    kernel = np.ones(width)
    num = np.convolve(x, kernel)[right : right + x.size]
    den = np.convolve(np.ones_like(x), kernel)[right : right + x.size]
    return num / den


def read_reference(path: Union[str, Path]) -> tuple[list[dt.date], np.ndarray]:
    dates, cases = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["date", "cases"]:
            raise FormatError(f"{path}: expected header 'date,cases'")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            where = f"{path}:{lineno}"
            dates.append(_parse_date(rec[0], where))
            try:
                cases.append(float(rec[1]))
            except (ValueError, IndexError):
                raise FormatError(f"{where}: bad case count") from None
    if not dates:
        raise FormatError(f"{path}: no rows")
    for a, b in zip(dates, dates[1:]):
        if b <= a:
            raise FormatError(f"{path}: dates must be strictly increasing ({a} then {b})")
        if (b - a).days != 1:
            raise FormatError(f"{path}: missing dates between {a} and {b}")
    return dates, np.array(cases)


def daily_cases(cases: np.ndarray, mode: str) -> np.ndarray:
    """Daily counts with negative corrections clamped to zero.

    Cumulative input loses its first day to differencing.
    """
    if mode == "cumulative":
        daily = np.diff(cases)
    elif mode == "daily":
        daily = np.asarray(cases, dtype=float)
    else:
        raise ValueError("mode must be 'cumulative' or 'daily'")
    return np.maximum(daily, 0.0)


def load_reference(
    path: Union[str, Path],
    mode: str = "cumulative",
    smoothing_width: int = 7,
    date_range: Optional[tuple[dt.date, dt.date]] = None,
) -> TimeSeries:
    """Official cases as a denoised daily series indexed by date ordinal."""
    dates, cases = read_reference(path)
    daily = daily_cases(cases, mode)
    first = dates[1] if mode == "cumulative" else dates[0]
    if daily.size == 0:
        raise FormatError(f"{path}: need at least two rows for cumulative data")
    series = TimeSeries(first.toordinal(), rolling_mean(daily, smoothing_width))
    if date_range is not None:
        series = series.window(date_range[0].toordinal(), date_range[1].toordinal())
    return series


def survey_date_range(rows: Sequence[RawSurveyRow]) -> tuple[dt.date, dt.date]:
    dates = [r.date for r in rows]
    return min(dates), max(dates)

