"""Synthetic epidemic + survey experiments and the MAE evaluation protocol."""

from __future__ import annotations

import csv
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .epidemic import EpidemicTrajectory, config_from_dict, hidden_fraction, select_multiwave
from .errors import ConfigError, NoOverlap
from .estimator import ESTIMATORS, METHODS, SMOOTHINGS, EstimateSeries, accumulate, nsum_mean, smooth
from .survey import SurveyConfig, run_survey
from .timeseries import TimeSeries, format_float, mae, range_normalize


def bin_reference(daily: TimeSeries, accum: int, origin: int = 0) -> dict[int, float]:
    """Mean of a daily series over each ``accum``-day bin it fully covers."""
    out = {}
    days, values = daily.days, daily.values
    first_bin = -((origin - daily.start_day) // accum)
    last_bin = (daily.end_day - origin + 1) // accum - 1
    for b in range(first_bin, last_bin + 1):
        lo = origin + b * accum - daily.start_day
        out[b] = float(values[lo : lo + accum].mean())
    return out


def aligned(e: EstimateSeries, reference: TimeSeries, origin: int = 0) -> tuple[TimeSeries, TimeSeries]:
    """Estimate and binned reference restricted to their common complete bins."""
    ref = bin_reference(reference, e.accum, origin)
    keep = [
        (v, ref[b])
        for b, v, missing, partial in zip(e.bins, e.values, e.missing, e.partial)
        if not missing and not partial and b in ref
    ]
    if not keep:
        raise NoOverlap("estimate and reference share no complete bins")
    est, truth = zip(*keep)
    return TimeSeries(0, np.array(est)), TimeSeries(0, np.array(truth))


def normalized_mae(e: EstimateSeries, reference: TimeSeries, origin: int = 0) -> float:
    """MAE between range-normalized estimate and reference on the overlap."""
    est, truth = aligned(e, reference, origin)
    return mae(range_normalize(est), range_normalize(truth))


def estimate_all(batches, accum: int, w: int, methods: Sequence[str] = METHODS) -> dict[tuple[str, str], EstimateSeries]:
    """Every (method, smoothing) combination for one set of daily batches."""
    binned = accumulate(batches, accum)
    out = {}
    for method in methods:
        if method == "NSUM":
            raw = nsum_mean(binned, accum, drop_zero_degree=True)
        else:
            raw = ESTIMATORS[method](binned, accum)
        for smoothing in SMOOTHINGS:
            out[(method, smoothing)] = smooth(raw, smoothing, w)
    return out


@dataclass(frozen=True)
class CellParams:
    d: float
    n: int
    n_d: int
    accum: int
    period: int
    w: int
    seed: int

    def key(self) -> str:
        return f"d{self.d:g}_n{self.n}_nd{self.n_d}_a{self.accum}_p{self.period}_w{self.w}_s{self.seed}"

    def survey_seed(self) -> np.random.SeedSequence:
        # accum and w are post-processing choices: they share one survey draw
        return np.random.SeedSequence([self.seed, int(round(self.d * 1000)), self.n, self.n_d, self.period])


RESULT_HEADER = ["d", "n", "n_d", "accum", "period", "w", "seed", "method", "smoothing", "mae"]


def simulate_cell(traj: EpidemicTrajectory, p: CellParams):
    """Daily survey batches for one cell."""
    f = hidden_fraction(traj, p.period)
    config = SurveyConfig(d=p.d, n=p.n, n_d=p.n_d, period=p.period, seed=p.seed)
    seed = int(p.survey_seed().generate_state(1, np.uint64)[0])
    return run_survey(f, config, seed=seed)


def run_cell(traj: EpidemicTrajectory, p: CellParams) -> list[list[str]]:
    """MAE of all nine estimates against incidence, as result rows."""
    batches = simulate_cell(traj, p)
    rows = []
    for (method, smoothing), est in estimate_all(batches, p.accum, p.w).items():
        err = normalized_mae(est, traj.incidence)
        rows.append(
            [f"{p.d:g}", str(p.n), str(p.n_d), str(p.accum), str(p.period), str(p.w), str(p.seed),
             method, smoothing, format_float(err)]
        )
    return rows


DEFAULT_GRID = {
    "d": [5],
    "n": [5, 10, 20, 40],
    "n_d": [60],
    "accum": [7],
    "period": [7],
    "w": [2],
    "seeds": 16,
    "epidemic": {},
}


def expand_grid(grid: dict) -> list[CellParams]:
    unknown = set(grid) - {"d", "n", "n_d", "accum", "period", "w", "seeds", "epidemic"}
    if unknown:
        raise ConfigError(f"unknown grid keys: {sorted(unknown)}")
    seeds = grid.get("seeds", 16)
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    axes = []
    for name in ("d", "n", "n_d", "accum", "period", "w"):
        values = grid.get(name, DEFAULT_GRID[name])
        axes.append(values if isinstance(values, list) else [values])
    cells = []
    for d, n, n_d, accum, period, w in itertools.product(*axes):
        try:
            SurveyConfig(d=float(d), n=int(n), n_d=int(n_d), period=int(period))
        except ConfigError as exc:
            raise ConfigError(f"grid point d={d}, n={n}, n_d={n_d}, period={period}: {exc}") from None
        if int(accum) < 1 or int(w) < 0:
            raise ConfigError("accum must be >= 1 and w >= 0")
        for seed in seeds:
            cells.append(CellParams(float(d), int(n), int(n_d), int(accum), int(period), int(w), int(seed)))
    return cells


def epidemic_for_grid(grid: dict) -> EpidemicTrajectory:
    """First multi-wave trajectory for the grid's epidemic settings."""
    return select_multiwave(config_from_dict(dict(grid.get("epidemic", {}))))


def _write_rows(path: Path, rows: Iterable[Sequence[str]], header: Optional[Sequence[str]] = None) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        if header:
            out.writerow(header)
        out.writerows(rows)
    os.replace(tmp, path)


def _read_rows(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return [r for r in csv.reader(fh) if r]


def _cell_job(args):
    traj, p, path = args
    _write_rows(Path(path), run_cell(traj, p))
    return path


def run_sweep(grid: dict, out_dir: Union[str, Path], jobs: int = 1, limit: Optional[int] = None) -> Path:
    """Run every grid cell, checkpointing each under ``out_dir/cells``.

    Cells with an existing checkpoint are skipped, so an interrupted sweep
    resumes where it stopped. ``limit`` caps how many new cells run in this
    call. The merged ``results.csv`` is sorted by cell key, independent of
    execution order and worker count.
    """
    out_dir = Path(out_dir)
    cell_dir = out_dir / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    traj = epidemic_for_grid(grid)
    cells = expand_grid(grid)
    pending = [(traj, p, str(cell_dir / f"{p.key()}.csv")) for p in cells if not (cell_dir / f"{p.key()}.csv").exists()]
    if limit is not None:
        pending = pending[:limit]
    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_cell_job, pending))
    else:
        for job in pending:
            _cell_job(job)
    missing = [p for p in cells if not (cell_dir / f"{p.key()}.csv").exists()]
    result = out_dir / "results.csv"
    if missing:
        return result
    rows = []
    for p in sorted(cells, key=lambda c: (c.d, c.n, c.n_d, c.accum, c.period, c.w, c.seed)):
        rows.extend(_read_rows(cell_dir / f"{p.key()}.csv"))
    _write_rows(result, rows, RESULT_HEADER)
    return result


def median_mae(rows: Iterable[dict]) -> dict[tuple[str, str], float]:
    groups: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        groups.setdefault((r["method"], r["smoothing"]), []).append(float(r["mae"]))
    return {k: float(np.median(v)) for k, v in groups.items()}
