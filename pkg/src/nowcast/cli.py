"""Command-line front end.

Every command writes its outputs plus a ``<name>.manifest.json`` into
``--out-dir``. The manifest holds the fully resolved configuration, so
``nowcast replay`` reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .bounds import VarianceInputs, WindowBoundInputs, gamma_factor, lambda_threshold_thm3, lambda_threshold_thm4
from .bounds import variance_indirect
from .epidemic import (
    SirConfig,
    TRAJECTORY_HEADER,
    config_from_dict,
    config_to_dict,
    hidden_fraction,
    parse_config_text,
    read_trajectory,
    select_multiwave,
    simulate,
    write_trajectory,
)
from .errors import ConfigError, DomainError, FormatError, NoOverlap, ShapeError
from .estimator import (
    ESTIMATORS,
    METHODS,
    SMOOTHINGS,
    EstimateSeries,
    accumulate,
    nsum_mean,
    read_estimate,
    smooth,
    write_estimate,
)
from .experiment import DEFAULT_GRID, aligned, bin_reference, expand_grid, median_mae, run_sweep
from .ingest import (
    QUESTION_FIELDS,
    load_reference,
    outlier_filter,
    read_survey,
    survey_date_range,
    to_batches,
)
from .survey import BiasGroups, SurveyConfig, apply_bias, read_batches, run_survey, write_batches
from .svg import write_line_chart
from .timeseries import TimeSeries, first_diff_ratio, format_float, range_normalize, read_csv, second_diff_ratio, write_csv
from .timeseries import mae
from .window import SmoothnessProfile, aggregated_estimate

EXIT_CONFIG, EXIT_SHAPE, EXIT_RANGE, EXIT_DOMAIN = 2, 3, 4, 5

EPILOG = """exit codes:
  0  success
  2  invalid configuration or arguments
  3  data shape or file format problem (e.g. NSUM without degrees)
  4  series do not overlap in time
  5  value outside a formula's domain (e.g. zero in a ratio series)
"""


def _write_table(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


def _num(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else format_float(x)


# ---------------------------------------------------------------- simulate


def run_simulate(cfg: dict, out: Path) -> list[str]:
    config = config_from_dict(cfg["epidemic"])
    traj = select_multiwave(config) if cfg["multiwave"] else simulate(config)
    write_trajectory(traj, out / "trajectory.csv")
    days = list(traj.incidence.days)
    write_line_chart(
        out / "trajectory.svg",
        [("incidence", days, list(traj.incidence.values)), ("infectious", days, list(traj.i.values))],
        title=f"SIR trajectory (seed {traj.seed})",
        xlabel="day",
        ylabel="fraction",
    )
    return ["trajectory.csv", "trajectory.svg"]


def resolve_simulate(args) -> dict:
    config = SirConfig()
    if args.config:
        config = parse_config_text(Path(args.config).read_text())
    if args.seed is not None:
        config = config_from_dict({"seed": args.seed}, base=config)
    return {"epidemic": config_to_dict(config), "multiwave": bool(args.multiwave)}


# ---------------------------------------------------------------- survey


def _parse_bias(text: Optional[str]) -> Optional[BiasGroups]:
    # "q1:alpha1,q2:alpha2"
    if not text:
        return None
    try:
        groups = [tuple(float(x) for x in part.split(":")) for part in text.split(",")]
        if any(len(g) != 2 for g in groups):
            raise ValueError
    except ValueError:
        raise ConfigError("bias: expected 'q:alpha[,q:alpha...]'") from None
    try:
        return BiasGroups(tuple(groups))
    except (DomainError, ValueError) as exc:
        raise ConfigError(f"bias: {exc}") from None


def run_survey_cmd(cfg: dict, out: Path) -> list[str]:
    traj = read_trajectory(cfg["trajectory"])
    config = SurveyConfig(d=cfg["d"], n=cfg["n"], n_d=cfg["n_d"], period=cfg["period"], seed=cfg["seed"])
    f = hidden_fraction(traj, config.period)
    batches = run_survey(f, config)
    bias = _parse_bias(cfg["bias"])
    if bias is not None:
        rng = np.random.default_rng([1, cfg["seed"]])
        batches = [apply_bias(b, bias, rng) for b in batches]
    write_batches(batches, out / "batches.csv")
    write_csv(f, out / "hidden_fraction.csv")
    return ["batches.csv", "hidden_fraction.csv"]


def resolve_survey(args) -> dict:
    seed = 0 if args.seed is None else args.seed
    SurveyConfig(d=args.d, n=args.n, n_d=args.n_d, period=args.period, seed=seed)
    _parse_bias(args.bias)
    return {
        "trajectory": str(Path(args.trajectory).resolve()),
        "d": float(args.d),
        "n": int(args.n),
        "n_d": int(args.n_d),
        "period": int(args.period),
        "seed": seed,
        "bias": args.bias,
    }


# ---------------------------------------------------------------- estimate


def _raw_estimate(batches, method: str, accum: int) -> EstimateSeries:
    binned = accumulate(batches, accum)
    if method == "NSUM":
        return nsum_mean(binned, accum, drop_zero_degree=True)
    return ESTIMATORS[method](binned, accum)


def run_estimate(cfg: dict, out: Path) -> list[str]:
    batches = read_batches(cfg["batches"])
    raw = _raw_estimate(batches, cfg["method"], cfg["accum"])
    name = cfg["name"]
    outputs = [f"{name}.csv"]
    if cfg["auto_window"]:
        profile = None
        if cfg["eps_f1"] is not None:
            eps_s1 = cfg["eps_s1"] if cfg["eps_s1"] is not None else cfg["eps_f1"]
            profile = SmoothnessProfile(cfg["eps_f1"], cfg["eps_f2"], eps_s1)
        result = aggregated_estimate(raw, cfg["lambda"], cfg["w_init"], profile)
        write_estimate(result.estimate, out / f"{name}.csv")
        _write_table(
            out / f"{name}_window.csv",
            ["w_selected", "lambda1", "lambda2", "satisfied"],
            [[result.w_selected, _num(result.lambda1), _num(result.lambda2), int(result.satisfied)]],
        )
        _write_table(
            out / f"{name}_trace.csv",
            ["w", "lambda_thm3", "lambda_thm4"],
            [[w, _num(l1), _num(l2)] for w, l1, l2 in result.trace],
        )
        outputs += [f"{name}_window.csv", f"{name}_trace.csv"]
    else:
        write_estimate(smooth(raw, cfg["smoothing"], cfg["w"]), out / f"{name}.csv")
    return outputs


def resolve_estimate(args) -> dict:
    if args.accum < 1:
        raise ConfigError("accum: must be >= 1")
    if args.w < 0:
        raise ConfigError("w: must be >= 0")
    if args.auto_window:
        if args.lam is None or not args.lam > 0:
            raise ConfigError("lambda: --auto-window needs a positive --lambda")
        if args.w_init < 1:
            raise ConfigError("w_init: must be >= 1")
        if (args.eps_f1 is None) != (args.eps_f2 is None):
            raise ConfigError("eps_f1/eps_f2: give both or neither")
    default = f"{args.method}_auto_a{args.accum}" if args.auto_window else f"{args.method}_{args.smoothing}_a{args.accum}_w{args.w}"
    return {
        "batches": str(Path(args.batches).resolve()),
        "method": args.method,
        "smoothing": args.smoothing,
        "accum": int(args.accum),
        "w": int(args.w),
        "auto_window": bool(args.auto_window),
        "lambda": args.lam,
        "w_init": int(args.w_init),
        "eps_f1": args.eps_f1,
        "eps_f2": args.eps_f2,
        "eps_s1": args.eps_s1,
        "name": args.name or default,
    }


# ---------------------------------------------------------------- evaluate


def load_reference_any(path: str, mode: str = "cumulative", smoothing_width: int = 7) -> TimeSeries:
    """Reference series from a ``day,value``, trajectory or ``date,cases`` CSV."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header == ["day", "value"]:
        return read_csv(path)
    if header == TRAJECTORY_HEADER:
        return read_trajectory(path).incidence
    if header == ["date", "cases"]:
        return load_reference(path, mode=mode, smoothing_width=smoothing_width)
    raise FormatError(f"{path}: unrecognized reference header {header}")


EVALUATE_HEADER = ["series", "method", "smoothing", "accum", "w", "mae", "mark"]


def mark_best(rows: list[dict]) -> None:
    """Label the lowest and second-lowest MAE within each (accum, w) group."""
    groups: dict[tuple[int, int], list[dict]] = {}
    for r in rows:
        r["mark"] = ""
        groups.setdefault((r["accum"], r["w"]), []).append(r)
    for group in groups.values():
        ranked = sorted(group, key=lambda r: (r["mae"], r["series"]))
        for r, label in zip(ranked, ("best", "second")):
            r["mark"] = label


def run_evaluate(cfg: dict, out: Path) -> list[str]:
    reference = load_reference_any(cfg["reference"], cfg["reference_mode"], cfg["smoothing_width"])
    rows, curves = [], []
    for path in cfg["estimates"]:
        e = read_estimate(path)
        est, truth = aligned(e, reference)
        est_n, truth_n = range_normalize(est), range_normalize(truth)
        name = Path(path).stem
        rows.append(
            {"series": name, "method": e.method, "smoothing": e.smoothing, "accum": e.accum, "w": e.w,
             "mae": mae(est_n, truth_n)}
        )
        curves.append((name, e, est_n, truth_n))
    mark_best(rows)
    rows.sort(key=lambda r: (r["accum"], r["w"], r["series"]))
    _write_table(
        out / "mae_table.csv",
        EVALUATE_HEADER,
        [[r["series"], r["method"], r["smoothing"], r["accum"], r["w"], format_float(r["mae"]), r["mark"]] for r in rows],
    )
    # plot every series on the bins of the first one's reference
    first = curves[0][1]
    ref = bin_reference(reference, first.accum)
    keep = [b for b, m, p in zip(first.bins, first.missing, first.partial) if not m and not p and b in ref]
    ref_curve = range_normalize(TimeSeries(0, np.array([ref[b] for b in keep])))
    series = [("reference", [int(b) for b in keep], list(ref_curve.values))]
    for name, e, est_n, _ in curves:
        bins = [int(b) for b, m, p in zip(e.bins, e.missing, e.partial) if not m and not p and b in bin_reference(reference, e.accum)]
        series.append((name, bins, list(est_n.values)))
    write_line_chart(out / "mae_curves.svg", series, title="Range-normalized estimates", xlabel="bin", ylabel="normalized")
    return ["mae_table.csv", "mae_curves.svg"]


def resolve_evaluate(args) -> dict:
    if not args.estimates:
        raise ConfigError("estimates: at least one estimate CSV is required")
    return {
        "estimates": [str(Path(p).resolve()) for p in args.estimates],
        "reference": str(Path(args.reference).resolve()),
        "reference_mode": args.reference_mode,
        "smoothing_width": int(args.smoothing_width),
    }


# ---------------------------------------------------------------- sweep


def run_sweep_cmd(cfg: dict, out: Path) -> list[str]:
    result = run_sweep(cfg["grid"], out, jobs=cfg["jobs"], limit=cfg["limit"])
    if not result.exists():
        pending = sum(1 for p in expand_grid(cfg["grid"]) if not (out / "cells" / f"{p.key()}.csv").exists())
        print(f"{pending} cells still pending; rerun to resume", file=sys.stderr)
        return []
    with open(result, newline="") as fh:
        rows = list(csv.DictReader(fh))
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in ("d", "n", "n_d", "accum", "period", "w")), []).append(r)
    summary = []
    for key in sorted(groups, key=lambda k: tuple(float(x) for x in k)):
        for (method, smoothing), med in sorted(median_mae(groups[key]).items()):
            summary.append(list(key) + [method, smoothing, format_float(med)])
    _write_table(out / "summary.csv", ["d", "n", "n_d", "accum", "period", "w", "method", "smoothing", "median_mae"], summary)
    return ["results.csv", "summary.csv"]


def resolve_sweep(args) -> dict:
    grid = dict(DEFAULT_GRID)
    if args.config:
        try:
            grid.update(json.loads(Path(args.config).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
    grid["epidemic"] = dict(grid.get("epidemic", {}))
    if args.seed is not None:
        grid["epidemic"]["seed"] = args.seed
    config_from_dict(grid["epidemic"])
    expand_grid(grid)
    if args.jobs < 1:
        raise ConfigError("jobs: must be >= 1")
    return {"grid": grid, "jobs": int(args.jobs), "limit": args.limit}


# ---------------------------------------------------------------- diagnose


DIAGNOSE_HEADER = ["w", "gamma_f", "gamma_sigma2", "lambda_thm3", "lambda_thm4"]


def _ratio_column(ratios: TimeSeries, days: np.ndarray) -> list[str]:
    lookup = dict(zip(ratios.days.tolist(), ratios.values.tolist()))
    return [_num(lookup[d]) if d in lookup else "" for d in days.tolist()]


def _safe(fn: Callable[[], float]) -> float:
    try:
        return fn()
    except DomainError:
        return math.inf


def run_diagnose(cfg: dict, out: Path) -> list[str]:
    series = load_series(cfg["series"], cfg["column"])
    f = series.values / cfg["population"] if cfg["population"] else series.values
    f_series = TimeSeries(series.start_day, f)
    f1, f2 = first_diff_ratio(f_series), second_diff_ratio(f_series)
    if f.max() > 1:
        raise ConfigError("population: values exceed 1; pass --population to convert counts to fractions")
    sigma2 = TimeSeries(
        series.start_day,
        np.array([variance_indirect(VarianceInputs(x, cfg["mu_d"], cfg["sigma_d2"], x)) for x in f]),
    )
    s1, s2 = first_diff_ratio(sigma2), second_diff_ratio(sigma2)
    days = series.days
    _write_table(
        out / "ratios.csv",
        ["day", "value", "f_first_diff", "f_second_diff", "sigma2", "sigma2_first_diff", "sigma2_second_diff"],
        zip(
            days.tolist(),
            [format_float(v) for v in series.values],
            _ratio_column(f1, days),
            _ratio_column(f2, days),
            [format_float(v) for v in sigma2.values],
            _ratio_column(s1, days),
            _ratio_column(s2, days),
        ),
    )
    eps = {
        "f": (float(f1.values.max()), float(f2.values.max()) if len(f2) else 0.0),
        "sigma2": (float(s1.values.max()), float(s2.values.max()) if len(s2) else 0.0),
    }
    _write_table(out / "smoothness.csv", ["series", "eps1", "eps2"], [[k, format_float(a), format_float(b)] for k, (a, b) in eps.items()])
    ratio = cfg["sigma_ratio"]
    rows, ws, gf, gs = [], [], [], []
    for w in range(1, cfg["w_max"] + 1):
        gamma_f = _safe(lambda: gamma_factor(*eps["f"], w, ratio))
        gamma_s = _safe(lambda: gamma_factor(*eps["sigma2"], w, ratio))
        # equal response counts per bin: n_t / n_w = 1 / (2w + 1)
        lam3 = _safe(
            lambda: lambda_threshold_thm3(WindowBoundInputs(*eps["f"], *eps["sigma2"], w, 1, 2 * w + 1, ratio))
        )
        lam4 = _safe(lambda: lambda_threshold_thm4(gamma_f, gamma_s, 1, 2 * w + 1)) if math.isfinite(gamma_s) else math.inf
        rows.append([w, format_float(gamma_f), format_float(gamma_s), format_float(lam3), format_float(lam4)])
        ws.append(w)
        gf.append(gamma_f)
        gs.append(gamma_s)
    _write_table(out / "gamma.csv", DIAGNOSE_HEADER, rows)
    write_line_chart(out / "gamma.svg", [("gamma_f", ws, gf), ("gamma_sigma2", ws, gs)], title="Window deviation factors", xlabel="w", ylabel="gamma")
    write_line_chart(
        out / "ratios.svg",
        [("f first diff", list(f1.days), list(f1.values)), ("sigma2 first diff", list(s1.days), list(s1.values))],
        title="Relative first differences",
        xlabel="day",
        ylabel="ratio",
    )
    return ["ratios.csv", "smoothness.csv", "gamma.csv", "gamma.svg", "ratios.svg"]


def load_series(path: str, column: str = "incidence") -> TimeSeries:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header == TRAJECTORY_HEADER:
        traj = read_trajectory(path)
        if column not in ("s", "i", "r", "incidence", "r0"):
            raise ConfigError(f"column: unknown trajectory column {column!r}")
        return getattr(traj, column)
    return read_csv(path)


def resolve_diagnose(args) -> dict:
    if args.w_max < 1:
        raise ConfigError("w_max: must be >= 1")
    if args.population is not None and args.population <= 0:
        raise ConfigError("population: must be positive")
    return {
        "series": str(Path(args.series).resolve()),
        "column": args.column,
        "w_max": int(args.w_max),
        "sigma_ratio": float(args.sigma_ratio),
        "mu_d": float(args.mu_d),
        "sigma_d2": float(args.sigma_d2),
        "population": args.population,
    }


# ---------------------------------------------------------------- ingest


def run_ingest(cfg: dict, out: Path) -> list[str]:
    rows = read_survey(cfg["survey"])
    kept, report = outlier_filter(rows, QUESTION_FIELDS[cfg["question"]])
    if not kept:
        raise ShapeError("no survey rows survive filtering")
    write_batches(to_batches(kept, cfg["question"]), out / "batches.csv")
    (out / "filter_report.json").write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    outputs = ["batches.csv", "filter_report.json"]
    if cfg["reference"]:
        ref = load_reference(cfg["reference"], cfg["reference_mode"], cfg["smoothing_width"], survey_date_range(kept))
        write_csv(ref, out / "reference.csv")
        outputs.append("reference.csv")
    return outputs


def resolve_ingest(args) -> dict:
    if args.smoothing_width < 1:
        raise ConfigError("smoothing_width: must be >= 1")
    return {
        "survey": str(Path(args.survey).resolve()),
        "question": args.question,
        "reference": str(Path(args.reference).resolve()) if args.reference else None,
        "reference_mode": args.reference_mode,
        "smoothing_width": int(args.smoothing_width),
    }


# ---------------------------------------------------------------- plumbing

COMMANDS: dict[str, tuple[Callable, Callable]] = {
    "simulate": (resolve_simulate, run_simulate),
    "survey": (resolve_survey, run_survey_cmd),
    "estimate": (resolve_estimate, run_estimate),
    "evaluate": (resolve_evaluate, run_evaluate),
    "sweep": (resolve_sweep, run_sweep_cmd),
    "diagnose": (resolve_diagnose, run_diagnose),
    "ingest": (resolve_ingest, run_ingest),
}

# commands whose --config is not a generic option file
_OWN_CONFIG = {"simulate", "sweep"}


def manifest_name(command: str, cfg: dict) -> str:
    stem = cfg["name"] if command == "estimate" else command
    return f"{stem}.manifest.json"


def execute(command: str, cfg: dict, out_dir: Path) -> Path:
    """Run a resolved command and write its manifest; returns the manifest path."""
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = COMMANDS[command][1](cfg, out_dir)
    seed = cfg.get("seed", cfg.get("epidemic", {}).get("seed", cfg.get("grid", {}).get("epidemic", {}).get("seed", 0)))
    manifest = {
        "command": command,
        "config": cfg,
        "seed": seed,
        "tool_version": __version__,
        "output_paths": sorted(outputs),
    }
    path = out_dir / manifest_name(command, cfg)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def replay(manifest_path: str, out_dir: Optional[Path]) -> Path:
    manifest = json.loads(Path(manifest_path).read_text())
    command = manifest.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"{manifest_path}: unknown command {command!r}")
    if manifest.get("tool_version") != __version__:
        print(f"warning: manifest written by version {manifest.get('tool_version')}", file=sys.stderr)
    return execute(command, manifest["config"], out_dir or Path(manifest_path).parent)


def _read_option_file(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith(".json"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="nowcast",
        description="Simulate, estimate and evaluate hidden-population trends from indirect surveys.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, help="random seed (simulate, survey, sweep)")
    parser.add_argument(
        "--out-dir", help="directory for outputs and the manifest (default: current directory; for replay, the manifest's)"
    )
    parser.add_argument(
        "--config",
        help="options file: SirConfig key = value file for simulate, JSON grid for sweep, "
        "key = value (or JSON) option defaults for the other commands",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("simulate", help="run the SIR epidemic generator", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--multiwave", action="store_true", help="advance the seed until the run has at least two waves")
    subs["simulate"] = p

    p = sub.add_parser("survey", help="simulate daily indirect/direct survey responses", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("trajectory", help="trajectory CSV written by simulate")
    p.add_argument("--d", type=float, default=5.0, help="approximate mean degree")
    p.add_argument("--n", type=int, default=20, help="maximum respondents per day")
    p.add_argument("--n-d", type=int, default=60, help="nodes reachable by respondents")
    p.add_argument("--period", type=int, default=7, help="look-back days in the survey question")
    p.add_argument("--bias", help="reporting bias groups as 'q:alpha,q:alpha'")
    subs["survey"] = p

    p = sub.add_parser("estimate", help="per-bin estimates with optional smoothing", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("batches", help="response batch CSV")
    p.add_argument("--method", choices=METHODS, default="Ind")
    p.add_argument("--smoothing", choices=SMOOTHINGS, default="NoS")
    p.add_argument("--accum", type=int, default=1, help="days pooled per bin")
    p.add_argument("--w", type=int, default=0, help="smoothing half-width in bins")
    p.add_argument("--auto-window", action="store_true", help="choose w by the adaptive threshold search")
    p.add_argument("--lambda", dest="lam", type=float, help="target fractional error for --auto-window")
    p.add_argument("--w-init", type=int, default=5, help="largest window tried by --auto-window")
    p.add_argument("--eps-f1", type=float, help="first-difference bound of the hidden fraction")
    p.add_argument("--eps-f2", type=float, help="second-difference bound of the hidden fraction")
    p.add_argument("--eps-s1", type=float, help="first-difference bound of the response variance")
    p.add_argument("--name", help="output file stem")
    subs["estimate"] = p

    p = sub.add_parser("evaluate", help="MAE of range-normalized estimates against a reference", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("estimates", nargs="+", help="estimate CSVs written by estimate")
    p.add_argument("--reference", required=True, help="day,value series, trajectory or date,cases CSV")
    p.add_argument("--reference-mode", choices=("cumulative", "daily"), default="cumulative", help="for date,cases references")
    p.add_argument("--smoothing-width", type=int, default=7, help="rolling mean width for date,cases references")
    subs["evaluate"] = p

    p = sub.add_parser("sweep", help="run a seeded parameter grid (resumable)", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--limit", type=int, help="run at most this many new cells, then stop")
    subs["sweep"] = p

    p = sub.add_parser("diagnose", help="smoothness ratios and window factors of a series", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("series", help="day,value or trajectory CSV")
    p.add_argument("--column", default="incidence", help="trajectory column to use")
    p.add_argument("--w-max", type=int, default=10)
    p.add_argument("--sigma-ratio", type=float, default=0.3, help="sigma_n / mu_n of the response counts")
    p.add_argument("--mu-d", type=float, default=15.0, help="mean latent degree for the variance series")
    p.add_argument("--sigma-d2", type=float, default=100.0, help="latent degree variance for the variance series")
    p.add_argument("--population", type=float, help="divide values by this to obtain fractions")
    subs["diagnose"] = p

    p = sub.add_parser("ingest", help="clean a survey CSV into response batches", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("survey", help="survey microdata CSV")
    p.add_argument("--question", choices=sorted(QUESTION_FIELDS), default="household")
    p.add_argument("--reference", help="date,cases CSV of official counts")
    p.add_argument("--reference-mode", choices=("cumulative", "daily"), default="cumulative")
    p.add_argument("--smoothing-width", type=int, default=7)
    subs["ingest"] = p

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    subs["replay"] = p
    return parser, subs


def _apply_option_file(parser, subs, args, argv):
    sub = subs[args.command]
    values = _read_option_file(args.config)
    allowed = {a.dest for a in sub._actions if a.option_strings and a.dest != "help"}
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"{args.config}: unknown options {unknown}; allowed: {sorted(allowed)}")
    flags = {a.dest for a in sub._actions if isinstance(a, argparse._StoreTrueAction)}
    for key in flags & set(values):
        if isinstance(values[key], str):
            if values[key].lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"{key}: expected true or false")
            values[key] = values[key].lower() in ("true", "1", "yes")
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            path = replay(args.manifest, Path(args.out_dir) if args.out_dir else None)
        else:
            if args.config and args.command not in _OWN_CONFIG:
                args = _apply_option_file(parser, subs, args, argv)
            cfg = COMMANDS[args.command][0](args)
            path = execute(args.command, cfg, Path(args.out_dir or "."))
    except NoOverlap as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ShapeError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
