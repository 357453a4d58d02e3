"""Per-bin estimates from response batches, accumulation, and moving averages."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .errors import DomainError, FormatError, ShapeError
from .survey import ResponseBatch
from .timeseries import TimeSeries, format_float

METHODS = ("Ind", "NSUM", "Dir")
SMOOTHINGS = ("NoS", "WA", "UA")


@dataclass(frozen=True, eq=False)
class EstimateSeries:
    """Estimated signal per bin together with the number of responses behind it.

    Bins without responses have ``counts == 0`` and ``NaN`` values; moving
    averages give them zero weight.

    Attributes
    ----------
    start : int
        Index of the first bin (a day when ``accum == 1``).
    values, counts : ndarray
    method : {"Ind", "NSUM", "Dir"}
    smoothing : {"NoS", "WA", "UA"}
    accum : int
        Days pooled per bin.
    w : int
        Half-width of the smoothing window.
    partial : ndarray of bool, optional
        Bins covering fewer than ``accum`` days of data.
    """

    start: int
    values: np.ndarray
    counts: np.ndarray
    method: str
    smoothing: str = "NoS"
    accum: int = 1
    w: int = 0
    partial: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(-1)
        counts = np.array(self.counts, dtype=np.int64).reshape(-1)
        if values.size != counts.size:
            raise ShapeError(f"{values.size} values but {counts.size} counts")
        if values.size == 0:
            raise ShapeError("an EstimateSeries needs at least one bin")
        if np.any(counts < 0):
            raise DomainError("counts must be non-negative")
        if np.any(np.isnan(values) != (counts == 0)):
            raise DomainError("values must be NaN exactly where counts are zero")
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if self.smoothing not in SMOOTHINGS:
            raise DomainError(f"unknown smoothing {self.smoothing!r}")
        partial = np.zeros(values.size, dtype=bool) if self.partial is None else np.array(self.partial, dtype=bool)
        if partial.size != values.size:
            raise ShapeError("partial mask must align with values")
        for arr in (values, counts, partial):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "partial", partial)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EstimateSeries):
            return NotImplemented
        return (
            (self.start, self.method, self.smoothing, self.accum, self.w)
            == (other.start, other.method, other.smoothing, other.accum, other.w)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.partial, other.partial)
        )

    __hash__ = None

    @property
    def bins(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self))

    @property
    def missing(self) -> np.ndarray:
        return self.counts == 0

    @property
    def series(self) -> TimeSeries:
        if self.missing.any():
            raise DomainError("series has bins without responses")
        return TimeSeries(self.start, self.values)

    def replace(self, **changes) -> "EstimateSeries":
        return dataclasses.replace(self, **changes)


def _merge(arrays: Sequence[Optional[np.ndarray]]) -> Optional[np.ndarray]:
    if any(a is None for a in arrays):
        return None
    return np.concatenate(arrays)


def accumulate(batches: Sequence[ResponseBatch], accum: int, origin: int = 0) -> list[ResponseBatch]:
    """Pool responses over consecutive ``accum``-day blocks.

    Block ``b`` covers days ``origin + b*accum .. origin + (b+1)*accum - 1``
    and the merged batch carries ``day = b``, so with the default origin a
    bin index maps back to absolute days. Blocks without responses are
    omitted. The first and last blocks are flagged ``partial`` when the data
    do not cover all of their days.
    """
    if not batches:
        raise ShapeError("nothing to accumulate")
    if accum < 1:
        raise ValueError("accum must be >= 1")
    days = [b.day for b in batches]
    if any(b < a for a, b in zip(days, days[1:])):
        raise ValueError("batches must be sorted by day")
    if accum == 1 and origin == 0:
        return list(batches)
    blocks: dict[int, list[ResponseBatch]] = {}
    for b in batches:
        blocks.setdefault((b.day - origin) // accum, []).append(b)
    first, last = min(blocks), max(blocks)
    head_cut = days[0] > origin + first * accum
    tail_cut = days[-1] < origin + (last + 1) * accum - 1
    partial = {first: head_cut, last: tail_cut} if first != last else {first: head_cut or tail_cut}
    out = []
    for block in sorted(blocks):
        members = blocks[block]
        out.append(
            ResponseBatch(
                block,
                _merge([m.indirect_counts for m in members]),
                _merge([m.degrees for m in members]),
                _merge([m.direct_flags for m in members]),
                partial=partial.get(block, False) or any(m.partial for m in members),
            )
        )
    return out


def _per_bin(
    batches: Sequence[ResponseBatch], stat: Callable[[ResponseBatch], np.ndarray], method: str, accum: int
) -> EstimateSeries:
    # stat maps a batch to the per-respondent quantities that get averaged
    if not batches:
        raise ShapeError("no batches")
    start, stop = batches[0].day, batches[-1].day
    values = np.full(stop - start + 1, np.nan)
    counts = np.zeros(stop - start + 1, dtype=np.int64)
    partial = np.zeros(stop - start + 1, dtype=bool)
    for b in batches:
        x = stat(b)
        if x.size:
            values[b.day - start] = float(x.mean())
            counts[b.day - start] = x.size
        partial[b.day - start] = b.partial
    return EstimateSeries(start, values, counts, method, "NoS", accum, 0, partial)


def _indirect(b: ResponseBatch) -> np.ndarray:
    if b.indirect_counts is None:
        raise ShapeError(f"bin {b.day} has no indirect responses")
    return b.indirect_counts


def indirect_mean(batches: Sequence[ResponseBatch], accum: int = 1) -> EstimateSeries:
    """Mean indirect count per bin; proportional to the hidden fraction."""
    return _per_bin(batches, _indirect, "Ind", accum)


def nsum_mean(batches: Sequence[ResponseBatch], accum: int = 1, drop_zero_degree: bool = False) -> EstimateSeries:
    """Mean of degree-normalized indirect counts per bin.

    Respondents reporting degree 0 make the ratio undefined and raise
    DomainError unless ``drop_zero_degree`` is set, in which case they are
    left out (and a bin made only of them becomes missing).
    """

    def ratios(b: ResponseBatch) -> np.ndarray:
        if b.degrees is None:
            raise ShapeError(f"bin {b.day} has no degrees; NSUM needs them")
        counts = _indirect(b)
        ok = b.degrees >= 1
        if not ok.all() and not drop_zero_degree:
            raise DomainError(f"bin {b.day} contains a respondent with degree 0")
        return counts[ok] / b.degrees[ok]

    return _per_bin(batches, ratios, "NSUM", accum)


def _direct_stat(b: ResponseBatch) -> np.ndarray:
    if b.direct_flags is None:
        raise ShapeError(f"bin {b.day} has no direct responses")
    return b.direct_flags.astype(float)


def direct_mean(batches: Sequence[ResponseBatch], accum: int = 1) -> EstimateSeries:
    return _per_bin(batches, _direct_stat, "Dir", accum)


ESTIMATORS = {"Ind": indirect_mean, "NSUM": nsum_mean, "Dir": direct_mean}


def response_variance(batches: Sequence[ResponseBatch]) -> np.ndarray:
    """Sample variance of indirect counts per bin (NaN for bins with < 2 responses)."""
    start, stop = batches[0].day, batches[-1].day
    out = np.full(stop - start + 1, np.nan)
    for b in batches:
        x = _indirect(b)
        if x.size > 1:
            out[b.day - start] = x.var(ddof=1)
    return out


def _window_sum(x: np.ndarray, w: int) -> np.ndarray:
    # centered sum over [t-w, t+w], truncated at the ends
    return np.convolve(x, np.ones(2 * w + 1))[w : w + x.size]


def _clip_to_window(values: np.ndarray, e: EstimateSeries, w: int) -> np.ndarray:
    # an average of the window cannot leave [min, max] of the window; clipping
    # removes rounding excursions so constants are reproduced bit-exactly
    size = 2 * w + 1
    lo = minimum_filter1d(np.where(e.missing, np.inf, e.values), size, mode="constant", cval=np.inf)
    hi = maximum_filter1d(np.where(e.missing, -np.inf, e.values), size, mode="constant", cval=-np.inf)
    return np.where(np.isnan(values), np.nan, np.clip(values, lo, hi))


def weighted_ma(e: EstimateSeries, w: int) -> EstimateSeries:
    """Response-count weighted moving average over ``[t-w, t+w]``.

    The window is truncated at the series ends and the weights renormalized;
    the output count is the number of responses inside the window.
    """
    if w < 0:
        raise ValueError("w must be >= 0")
    n = e.counts.astype(float)
    filled = np.where(e.missing, 0.0, e.values)
    num = _window_sum(n * filled, w)
    den = _window_sum(n, w)
    counts = np.rint(den).astype(np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, num / np.where(den > 0, den, 1.0), np.nan)
    if w == 0:
        values = np.where(e.missing, np.nan, e.values)
    else:
        values = _clip_to_window(values, e, w)
        # where the window's counts are all equal the weights collapse; reuse
        # the unweighted average so both agree bit for bit
        size = 2 * w + 1
        lo = minimum_filter1d(np.where(e.missing, np.inf, n), size, mode="constant", cval=np.inf)
        hi = maximum_filter1d(np.where(e.missing, -np.inf, n), size, mode="constant", cval=-np.inf)
        values = np.where(lo == hi, unweighted_ma(e, w).values, values)
    return e.replace(values=values, counts=counts, smoothing="WA", w=w)


def unweighted_ma(e: EstimateSeries, w: int) -> EstimateSeries:
    """Plain mean of the non-missing bins in ``[t-w, t+w]``."""
    if w < 0:
        raise ValueError("w must be >= 0")
    present = (~e.missing).astype(float)
    filled = np.where(e.missing, 0.0, e.values)
    num = _window_sum(filled, w)
    den = _window_sum(present, w)
    counts = np.rint(_window_sum(e.counts.astype(float), w)).astype(np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    values = np.where(e.missing, np.nan, e.values) if w == 0 else _clip_to_window(values, e, w)
    return e.replace(values=values, counts=counts, smoothing="UA", w=w)


def smooth(e: EstimateSeries, smoothing: str, w: int) -> EstimateSeries:
    if smoothing == "NoS":
        return e.replace(smoothing="NoS", w=0)
    if smoothing == "WA":
        return weighted_ma(e, w)
    if smoothing == "UA":
        return unweighted_ma(e, w)
    raise ValueError(f"unknown smoothing {smoothing!r}")


def calibrate_mu_d(e: EstimateSeries, f_tau: float, tau: int) -> float:
    """Mean latent degree implied by a known hidden fraction ``f_tau`` at bin ``tau``."""
    if f_tau <= 0:
        raise DomainError("f_tau must be positive")
    k = tau - e.start
    if not 0 <= k < len(e):
        raise DomainError(f"bin {tau} outside [{e.start}, {e.start + len(e) - 1}]")
    if e.missing[k]:
        raise DomainError(f"bin {tau} has no responses")
    return float(e.values[k] / f_tau)


ESTIMATE_HEADER = ["bin", "value", "n", "method", "smoothing", "accum", "w"]


def write_estimate(e: EstimateSeries, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(ESTIMATE_HEADER)
        for b, v, n in zip(e.bins, e.values, e.counts):
            value = "" if n == 0 else format_float(v)
            out.writerow([int(b), value, int(n), e.method, e.smoothing, e.accum, e.w])


def read_estimate(path: Union[str, Path]) -> EstimateSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ESTIMATE_HEADER:
            raise FormatError(f"{path}: expected header {','.join(ESTIMATE_HEADER)}")
        rows = [r for r in reader if r]
    if not rows:
        raise FormatError(f"{path}: no rows")
    try:
        bins = [int(r[0]) for r in rows]
        values = [float(r[1]) if r[1] != "" else np.nan for r in rows]
        counts = [int(r[2]) for r in rows]
        meta = {(r[3], r[4], int(r[5]), int(r[6])) for r in rows}
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if len(meta) != 1:
        raise FormatError(f"{path}: metadata columns must be constant")
    if any(b != a + 1 for a, b in zip(bins, bins[1:])):
        raise FormatError(f"{path}: bins must be consecutive")
    method, smoothing, accum, w = meta.pop()
    try:
        return EstimateSeries(bins[0], values, counts, method, smoothing, accum, w)
    except (DomainError, ShapeError) as exc:
        raise FormatError(f"{path}: {exc}") from None
