import csv

import numpy as np
import pytest

from nowcast.epidemic import SirConfig, select_multiwave
from nowcast.errors import ConfigError, NoOverlap
from nowcast.estimator import EstimateSeries
from nowcast.experiment import (
    RESULT_HEADER,
    CellParams,
    aligned,
    bin_reference,
    estimate_all,
    expand_grid,
    median_mae,
    normalized_mae,
    run_cell,
    run_sweep,
    simulate_cell,
)
from nowcast.timeseries import TimeSeries

ONE_POINT = {"d": [5], "n": [10], "n_d": [60], "accum": [7], "period": [7], "w": [2], "seeds": 2}


@pytest.fixture(scope="module")
def trajectory():
    return select_multiwave(SirConfig())


def test_bin_reference_only_full_bins():
    daily = TimeSeries(3, np.arange(3, 24, dtype=float))
    bins = bin_reference(daily, 7)
    # days 3..23: bin 0 (0-6) is partial, bins 1 (7-13) and 2 (14-20) are full, bin 3 is partial
    assert bins == {1: 10.0, 2: 17.0}


def test_aligned_skips_partial_and_missing_bins():
    reference = TimeSeries(0, np.arange(28, dtype=float))
    e = EstimateSeries(0, [1.0, np.nan, 3.0, 4.0], [5, 0, 5, 5], "Ind", accum=7, partial=[False, False, False, True])
    est, truth = aligned(e, reference)
    assert list(est.values) == [1.0, 3.0]
    assert list(truth.values) == [3.0, 17.0]
    with pytest.raises(NoOverlap):
        aligned(EstimateSeries(50, [1.0], [1], "Ind", accum=7), reference)


def test_normalized_mae_zero_for_affine_copy():
    reference = TimeSeries(0, np.array([1.0, 4.0, 2.0, 8.0]))
    e = EstimateSeries(0, 3 * reference.values + 2, [4] * 4, "Dir")
    assert normalized_mae(e, reference) == 0


def test_estimate_all_yields_nine_series(trajectory):
    p = CellParams(5.0, 10, 60, 7, 7, 2, 0)
    out = estimate_all(simulate_cell(trajectory, p), p.accum, p.w)
    assert sorted(out) == sorted((m, s) for m in ("Ind", "NSUM", "Dir") for s in ("NoS", "WA", "UA"))
    assert all(e.accum == 7 for e in out.values())


def test_run_cell_rows(trajectory):
    rows = run_cell(trajectory, CellParams(5.0, 10, 60, 7, 7, 2, 1))
    assert len(rows) == 9
    assert all(len(r) == len(RESULT_HEADER) for r in rows)
    assert all(0 <= float(r[-1]) <= 1 for r in rows)


def test_accum_and_w_share_survey_draw():
    a = CellParams(5.0, 10, 60, 7, 7, 2, 3)
    b = CellParams(5.0, 10, 60, 14, 7, 5, 3)
    assert a.survey_seed().entropy == b.survey_seed().entropy
    assert a.survey_seed().entropy != CellParams(5.0, 10, 60, 7, 7, 2, 4).survey_seed().entropy


def test_expand_grid_counts_and_errors():
    assert len(expand_grid(ONE_POINT)) == 2
    assert len(expand_grid({"n": [5, 10, 20, 40]})) == 64
    with pytest.raises(ConfigError, match="bogus"):
        expand_grid({"bogus": 1})
    with pytest.raises(ConfigError):
        expand_grid({"d": [60], "n_d": [60]})


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_sweep_one_point_grid(tmp_path):
    result = run_sweep(ONE_POINT, tmp_path)
    rows = read_rows(result)
    assert len(rows) == 18
    assert {r["seed"] for r in rows} == {"0", "1"}
    medians = median_mae(rows)
    assert len(medians) == 9


def test_sweep_resume_and_parallel_match(tmp_path):
    grid = dict(ONE_POINT, n=[5, 10])
    full = run_sweep(grid, tmp_path / "full").read_bytes()
    partial_dir = tmp_path / "resumed"
    run_sweep(grid, partial_dir, limit=1)
    assert not (partial_dir / "results.csv").exists()
    run_sweep(grid, partial_dir, limit=2)
    assert run_sweep(grid, partial_dir).read_bytes() == full
    assert run_sweep(grid, tmp_path / "parallel", jobs=2).read_bytes() == full
