"""Daily indirect, direct and NSUM survey responses over a latent bipartite graph.

The latent graph is redrawn every day. Each respondent draws a target degree
from a bounded power law ``p_k ~ k**-2`` and links to each of ``n_d``
coverable nodes with probability ``degree / n_d``; only the realized neighbor
count is kept. Neighbors belong to the hidden population independently with
probability ``f_t``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .timeseries import TimeSeries, format_float

# relative tolerance on |mean - d| before the minimum degree is raised
DEGREE_MEAN_RTOL = 0.1


@dataclass(frozen=True)
class SurveyConfig:
    """Survey simulation parameters.

    Attributes
    ----------
    d : float
        Approximate mean degree of the latent graph.
    n : int
        Daily respondent cap; the actual daily count is uniform on ``1..n``.
    n_d : int
        Number of nodes respondents can potentially cover.
    period : int
        Look-back window of the survey question, in days.
    seed : int
    """

    d: float = 5.0
    n: int = 20
    n_d: int = 60
    period: int = 7
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError("n: must be a positive integer")
        if self.n_d < 2:
            raise ConfigError("n_d: must be at least 2")
        if self.period < 1:
            raise ConfigError("period: must be a positive integer")
        if not 1 <= self.d <= self.n_d / 2:
            raise ConfigError(f"d: need 1 <= d <= n_d/2 = {self.n_d / 2}")


@dataclass(frozen=True, eq=False)
class ResponseBatch:
    """Responses collected on one day (or one accumulation bin).

    Any of the three response arrays may be absent, e.g. real surveys without
    a household-size question carry no degrees. Present arrays all have the
    same length ``n_t >= 1``.
    """

    day: int
    indirect_counts: Optional[np.ndarray]
    degrees: Optional[np.ndarray]
    direct_flags: Optional[np.ndarray]
    partial: bool = False

    def __post_init__(self) -> None:
        lengths = set()
        for name, dtype in (("indirect_counts", float), ("degrees", np.int64), ("direct_flags", np.int8)):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.array(value, dtype=dtype).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            lengths.add(arr.size)
        if not lengths:
            raise ShapeError("a ResponseBatch needs at least one response array")
        if len(lengths) > 1:
            raise ShapeError(f"response arrays disagree in length: {sorted(lengths)}")
        if lengths.pop() < 1:
            raise ShapeError("a ResponseBatch needs at least one respondent")

    @property
    def n_t(self) -> int:
        for arr in (self.indirect_counts, self.degrees, self.direct_flags):
            if arr is not None:
                return arr.size
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class BiasGroups:
    """Respondent groups ``(q_j, alpha_j)``: membership probability and reporting factor."""

    groups: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        groups = tuple((float(q), float(a)) for q, a in self.groups)
        object.__setattr__(self, "groups", groups)
        if not groups:
            raise ConfigError("at least one bias group is required")
        if any(q < 0 for q, _ in groups):
            raise ConfigError("group probabilities must be non-negative")
        if any(a <= 0 for _, a in groups):
            raise ConfigError("bias factors must be positive")
        if abs(sum(q for q, _ in groups) - 1.0) > 1e-12:
            raise ConfigError("group probabilities must sum to 1")

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([q for q, _ in self.groups])

    @property
    def factors(self) -> np.ndarray:
        return np.array([a for _, a in self.groups])


@lru_cache(maxsize=256)
def _degree_support(d: float, n_d: int) -> tuple[int, int]:
    """Pick ``(k_min, k_max)`` for the truncated power law.

    ``k_max`` is searched over ``k_min..n_d//2`` minimizing ``|mean - d|``
    (ties toward smaller ``k_max``). ``k_min`` starts at 1 and is raised only
    while the best reachable mean misses ``d`` by more than 10%, since with
    ``k_min = 1`` the mean grows like ``log(k_max)`` and cannot reach moderate
    ``d`` under the ``n_d/2`` cap.
    """
    cap = n_d // 2
    best = None
    for k_min in range(1, cap + 1):
        k = np.arange(k_min, cap + 1, dtype=float)
        # mean of the truncated law for every k_max at once
        errors = np.abs(np.cumsum(1.0 / k) / np.cumsum(k**-2.0) - d)
        j = int(np.argmin(errors))
        candidate = (float(errors[j]), k_min, k_min + j)
        if best is None or candidate[0] < best[0]:
            best = candidate
        if candidate[0] <= DEGREE_MEAN_RTOL * d:
            return k_min, k_min + j
    assert best is not None
    return best[1], best[2]


def degree_distribution(d: float, n_d: int) -> tuple[int, dict[int, float]]:
    """Bounded power-law pmf ``p_k ~ k**-2`` whose mean approximates ``d``.

    Returns
    -------
    k_max : int
    pmf : dict
        Probability of each degree in the support.

    Raises
    ------
    ConfigError
        If ``d`` lies outside ``[1, n_d/2]``.
    """
    if not 1 <= d <= n_d / 2:
        raise ConfigError(f"target mean degree {d} unreachable with n_d={n_d} (need 1 <= d <= n_d/2)")
    k_min, k_max = _degree_support(float(d), int(n_d))
    k = np.arange(k_min, k_max + 1, dtype=float)
    p = k**-2.0
    p /= p.sum()
    return k_max, {int(kk): float(pp) for kk, pp in zip(k, p)}


def _degree_arrays(d: float, n_d: int) -> tuple[np.ndarray, np.ndarray]:
    _, pmf = degree_distribution(d, n_d)
    return np.array(list(pmf)), np.array(list(pmf.values()))


def sample_indirect(degrees: np.ndarray, n_d: int, f: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Realize neighbor counts for target ``degrees`` and count hidden neighbors."""
    realized = rng.binomial(n_d, np.asarray(degrees, dtype=float) / n_d)
    hidden = rng.binomial(realized, f)
    return realized, hidden


def run_day(day: int, f_t: float, config: SurveyConfig, rng: np.random.Generator) -> ResponseBatch:
    """Simulate one day of responses at hidden fraction ``f_t``."""
    if not 0.0 <= f_t <= 1.0:
        raise ValueError(f"f_t must lie in [0, 1], got {f_t}")
    support, probs = _degree_arrays(config.d, config.n_d)
    n_t = int(rng.integers(1, config.n + 1))
    target = rng.choice(support, size=n_t, p=probs)
    realized, hidden = sample_indirect(target, config.n_d, f_t, rng)
    direct = rng.binomial(1, f_t, size=n_t)
    return ResponseBatch(day, hidden.astype(float), realized, direct)


def run_survey(f: TimeSeries, config: SurveyConfig, seed: Optional[int] = None) -> list[ResponseBatch]:
    """One batch per day of ``f``. Day ``t`` uses its own child generator, so
    any single day can be regenerated independently of the others."""
    root = np.random.SeedSequence(config.seed if seed is None else seed)
    children = root.spawn(len(f))
    return [
        run_day(int(day), float(ft), config, np.random.default_rng(child))
        for day, ft, child in zip(f.days, f.values, children)
    ]


def apply_bias(batch: ResponseBatch, bias: BiasGroups, rng: np.random.Generator) -> ResponseBatch:
    """Multiply each indirect count by the factor of a randomly drawn group."""
    if batch.indirect_counts is None:
        return batch
    groups = rng.choice(len(bias.groups), size=batch.n_t, p=bias.probabilities)
    scaled = batch.indirect_counts * bias.factors[groups]
    return ResponseBatch(batch.day, scaled, batch.degrees, batch.direct_flags, batch.partial)


BATCH_HEADER = ["day", "respondent", "indirect_count", "degree", "direct_flag"]


def _cell(arr: Optional[np.ndarray], j: int, as_float: bool = False) -> str:
    if arr is None:
        return ""
    return format_float(arr[j]) if as_float else str(int(arr[j]))


def write_batches(batches: Iterable[ResponseBatch], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(BATCH_HEADER)
        for b in batches:
            for j in range(b.n_t):
                out.writerow(
                    [b.day, j, _cell(b.indirect_counts, j, True), _cell(b.degrees, j), _cell(b.direct_flags, j)]
                )


def _column(values: Sequence[str], cast, path, day) -> Optional[np.ndarray]:
    present = [v != "" for v in values]
    if not any(present):
        return None
    if not all(present):
        raise FormatError(f"{path}: day {day} mixes empty and filled cells in one column")
    return np.array([cast(v) for v in values])


def read_batches(path: Union[str, Path]) -> list[ResponseBatch]:
    """Read a batch CSV. Rows are grouped by day and returned day-sorted."""
    by_day: dict[int, list[list[str]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != BATCH_HEADER:
            raise FormatError(f"{path}: expected header {','.join(BATCH_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(BATCH_HEADER):
                raise FormatError(f"{path}:{lineno}: expected {len(BATCH_HEADER)} fields")
            try:
                by_day.setdefault(int(row[0]), []).append(row)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad day {row[0]!r}") from None
    if not by_day:
        raise FormatError(f"{path}: no rows")
    batches = []
    try:
        for day in sorted(by_day):
            rows = by_day[day]
            batches.append(
                ResponseBatch(
                    day,
                    _column([r[2] for r in rows], float, path, day),
                    _column([r[3] for r in rows], int, path, day),
                    _column([r[4] for r in rows], int, path, day),
                )
            )
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from None
    return batches
