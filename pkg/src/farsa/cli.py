"""Command-line front end: ``farsa solve``, ``farsa grid`` and ``farsa compare``."""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import FarsaError
from .io import (
    DATASET_CATALOG,
    GROUP_FRACTIONS,
    LAMBDA_SCALES,
    build_instance,
    dataset_name,
    load_libsvm,
    map_labels,
    scale_features,
)
from .solver import OPTIMAL, TIME_LIMIT, TRACE_COLUMNS, SolveOptions, solve, solve_baseline_pg

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_USAGE = 2

TIME_LIMIT_ENV = "FARSA_TIME_LIMIT"
DEFAULT_TIME_LIMIT = 1000.0
METRIC_CLAMP = 10.0
OBJECTIVE_TIE = 1e-8
SOLVERS = ("farsa", "pg")
NON_DATA_SUFFIXES = (".json", ".csv", ".md")


def compare_metric(time_a, time_b, failed_a=False, failed_b=False) -> float:
    """``-log2(time_a / time_b)`` clamped to ``[-10, 10]``.

    A failed side (flag set or time ``None``) pins the result to the clamp in
    favour of the other side; both failing gives ``nan``.
    """
    failed_a = failed_a or time_a is None
    failed_b = failed_b or time_b is None
    if failed_a and failed_b:
        return float("nan")
    if failed_a:
        return -METRIC_CLAMP
    if failed_b:
        return METRIC_CLAMP
    if not (time_a > 0 and time_b > 0):
        raise ValueError("times must be positive")
    value = -math.log2(time_a / time_b)
    return max(-METRIC_CLAMP, min(METRIC_CLAMP, value))


def compare_objectives(obj_a, obj_b, tol=OBJECTIVE_TIE) -> str:
    """``'a'`` or ``'b'`` for the lower objective by more than ``tol``, else ``'tie'``."""
    if abs(obj_a - obj_b) <= tol:
        return "tie"
    return "a" if obj_a < obj_b else "b"


def compare_sparsity(zeros_a, zeros_b) -> str:
    """``'a'`` when a's zero groups strictly contain b's, ``'b'`` for the converse, else ``'none'``."""
    za, zb = set(zeros_a), set(zeros_b)
    if za > zb:
        return "a"
    if zb > za:
        return "b"
    return "none"


def default_time_limit() -> float:
    raw = os.environ.get(TIME_LIMIT_ENV)
    if raw is None:
        return DEFAULT_TIME_LIMIT
    try:
        value = float(raw)
    except ValueError:
        raise FarsaError(f"{TIME_LIMIT_ENV}={raw!r} is not a number") from None
    if not value > 0:
        raise FarsaError(f"{TIME_LIMIT_ENV} must be positive")
    return value


@dataclass
class RunConfig:
    data_path: str
    scale: bool = False
    fraction: float = 0.5
    lambda_scale: float = 0.1
    solver: str = "farsa"
    overrides: dict = field(default_factory=dict)
    output_format: str = "json"
    seed: int = 0
    time_limit: float = DEFAULT_TIME_LIMIT
    phi_switch: str = "off"

    def __post_init__(self):
        if self.fraction not in GROUP_FRACTIONS:
            raise ValueError(f"fraction must be one of {GROUP_FRACTIONS}")
        if not self.lambda_scale > 0:
            raise ValueError("lambda_scale must be positive")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.output_format not in ("json", "csv"):
            raise ValueError("format must be json or csv")
        if self.phi_switch not in ("off", "auto", "on"):
            raise ValueError("phi_switch must be off, auto or on")
        if not self.time_limit > 0:
            raise ValueError("time limit must be positive")


def load_dataset(path, scale: bool):
    ds = load_libsvm(path)
    if scale:
        ds = scale_features(ds)
    ds = map_labels(ds)
    known = DATASET_CATALOG.get(dataset_name(path))
    if known is not None and (ds.n_samples, ds.n_features) != known[:2]:
        print(f"warning: {path} has shape {(ds.n_samples, ds.n_features)}, "
              f"catalogue lists {known[:2]}", file=sys.stderr)
    return ds


def _options_for(cfg: RunConfig, ds) -> SolveOptions:
    values = dict(cfg.overrides)
    values["max_seconds"] = cfg.time_limit
    use_switch = cfg.phi_switch == "on" or (cfg.phi_switch == "auto" and ds.n_samples < ds.n_features)
    if use_switch:
        values["phi_switch"] = True
    return SolveOptions.from_dict(values)


def run_instance(cfg: RunConfig, ds=None):
    """Solve one instance; returns ``(report, summary dict)``."""
    if ds is None:
        ds = load_dataset(cfg.data_path, cfg.scale)
    obj, lam0 = build_instance(ds, cfg.fraction, cfg.lambda_scale)
    opts = _options_for(cfg, ds)
    if cfg.solver == "farsa":
        report = solve(obj, options=opts, seed=cfg.seed)
    else:
        report = solve_baseline_pg(obj, tol=opts.tol_rel, max_iter=opts.max_iter, seed=cfg.seed,
                                   options=opts)
    zero_idx = np.flatnonzero(obj.partition.zero_groups(report.x_final)).tolist()
    summary = {
        "dataset": dataset_name(cfg.data_path),
        "n_samples": ds.n_samples,
        "n_features": ds.n_features,
        "n_groups": obj.partition.n_groups,
        "fraction": cfg.fraction,
        "lambda_scale": cfg.lambda_scale,
        "lambda_min": lam0,
        "seed": cfg.seed,
        "zero_group_indices": zero_idx,
    }
    return report, summary


def write_trace(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for rec in report.trace:
            row = asdict(rec)
            writer.writerow([_csv_value(row[c]) for c in TRACE_COLUMNS])


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    return v


def run_single(cfg: RunConfig, output=None, trace_path=None) -> int:
    """Run ``solve`` for one configuration and emit the report. Returns the exit code."""
    try:
        report, summary = run_instance(cfg)
    except (OSError, FarsaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    payload = {"config": asdict(cfg), "instance": summary, "report": report.to_dict()}
    if trace_path:
        try:
            write_trace(report, trace_path)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    text = _render(payload, cfg.output_format)
    try:
        if output:
            Path(output).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if report.status == OPTIMAL else EXIT_SOLVER


def _render(payload, fmt):
    if fmt == "json":
        return json.dumps(payload, indent=2) + "\n"
    rep = payload["report"]
    row = {**{k: v for k, v in payload["instance"].items() if k != "zero_group_indices"},
           "solver": rep["solver"], "status": rep["status"],
           "objective": rep["objective_final"], "chi": rep["chi_final"],
           "iterations": rep["iterations"], "zero_groups": rep["zero_groups_final"],
           "seconds": rep["elapsed_seconds"]}
    return _csv_text([row], list(row))


def _csv_text(rows, columns):
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _csv_value(row.get(k, "")) for k in columns})
    return buf.getvalue()


# -- grid ---------------------------------------------------------------------

GRID_COLUMNS = (
    "dataset", "fraction", "lambda_scale", "n_groups", "solver", "status",
    "seconds", "objective", "zero_groups", "iterations", "message",
)
COMPARISON_COLUMNS = ("time_metric", "objective_winner", "sparsity_winner")


def _grid_task(args):
    cfg, ds = args
    try:
        report, summary = run_instance(cfg, ds)
    except Exception as exc:  # recorded per instance; the grid keeps going
        return {
            "dataset": dataset_name(cfg.data_path), "fraction": cfg.fraction,
            "lambda_scale": cfg.lambda_scale, "n_groups": "", "solver": cfg.solver,
            "status": "error", "seconds": "", "objective": "", "zero_groups": "",
            "iterations": "", "message": str(exc), "_zeros": None,
        }
    return {
        "dataset": summary["dataset"], "fraction": cfg.fraction,
        "lambda_scale": cfg.lambda_scale, "n_groups": summary["n_groups"],
        "solver": cfg.solver, "status": report.status, "seconds": report.elapsed,
        "objective": report.objective_final, "zero_groups": report.zero_groups_final,
        "iterations": report.iterations, "message": report.message,
        "_zeros": summary["zero_group_indices"],
    }


def find_datasets(data_dir) -> list:
    root = Path(data_dir)
    if not root.is_dir():
        raise FarsaError(f"{data_dir} is not a directory")
    return sorted(
        str(p) for p in root.iterdir()
        if p.is_file() and not p.name.startswith(".") and p.suffix not in NON_DATA_SUFFIXES
    )


def run_grid(paths, solvers=SOLVERS, scale=False, jobs=1, seed=0, time_limit=DEFAULT_TIME_LIMIT,
             overrides=None, fractions=GROUP_FRACTIONS, lambda_scales=LAMBDA_SCALES):
    """Run every (dataset, fraction, lambda scale, solver) combination.

    Returns one row per (dataset, fraction, lambda scale) with one block of
    columns per solver and, for two solvers, the comparison columns.
    """
    tasks = []
    load_errors = {}
    for path in paths:
        try:
            ds = load_dataset(path, scale)
        except (OSError, FarsaError) as exc:
            load_errors[path] = str(exc)
            ds = None
        for frac in fractions:
            for lam in lambda_scales:
                for solver in solvers:
                    cfg = RunConfig(path, scale=scale, fraction=frac, lambda_scale=lam,
                                    solver=solver, overrides=dict(overrides or {}), seed=seed,
                                    time_limit=time_limit)
                    tasks.append((cfg, ds))

    def run_all():
        runnable = [t for t in tasks if t[1] is not None]
        if jobs > 1 and len(runnable) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                done = dict(zip(map(id, runnable), pool.map(_grid_task, runnable)))
        else:
            done = {id(t): _grid_task(t) for t in runnable}
        for t in tasks:
            if t[1] is None:
                cfg = t[0]
                yield {"dataset": dataset_name(cfg.data_path), "fraction": cfg.fraction,
                       "lambda_scale": cfg.lambda_scale, "n_groups": "", "solver": cfg.solver,
                       "status": "error", "seconds": "", "objective": "", "zero_groups": "",
                       "iterations": "", "message": load_errors[cfg.data_path], "_zeros": None}
            else:
                yield done[id(t)]

    by_instance = {}
    for res in run_all():
        key = (res["dataset"], res["fraction"], res["lambda_scale"])
        by_instance.setdefault(key, {})[res["solver"]] = res

    rows = []
    for key, results in by_instance.items():
        row = {"dataset": key[0], "fraction": key[1], "lambda_scale": key[2]}
        for solver in solvers:
            res = results[solver]
            if row.get("n_groups", "") == "":
                row["n_groups"] = res["n_groups"]
            for col in GRID_COLUMNS[5:]:
                row[f"{solver}_{col}"] = res[col]
        if len(solvers) == 2:
            row.update(_comparison(results[solvers[0]], results[solvers[1]]))
        rows.append(row)
    return rows


def _comparison(a, b):
    out = dict.fromkeys(COMPARISON_COLUMNS, "")
    if TIME_LIMIT in (a["status"], b["status"]):
        return out  # timeouts are excluded from the ratio metrics
    ok_a, ok_b = a["status"] == OPTIMAL, b["status"] == OPTIMAL
    metric = compare_metric(a["seconds"] if ok_a else None, b["seconds"] if ok_b else None)
    out["time_metric"] = "" if math.isnan(metric) else metric
    if ok_a and ok_b:
        out["objective_winner"] = compare_objectives(a["objective"], b["objective"])
        out["sparsity_winner"] = compare_sparsity(a["_zeros"], b["_zeros"])
    return out


def grid_columns(solvers):
    cols = ["dataset", "fraction", "lambda_scale", "n_groups"]
    for solver in solvers:
        cols += [f"{solver}_{c}" for c in GRID_COLUMNS[5:]]
    if len(solvers) == 2:
        cols += list(COMPARISON_COLUMNS)
    return cols


# -- argument parsing ---------------------------------------------------------

def _parse_override(text):
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _add_run_flags(p):
    p.add_argument("--scale", action="store_true",
                   help="divide each feature column by its largest absolute entry")
    p.add_argument("--seed", type=int, default=0, help="seed for the initial PG parameter estimate")
    p.add_argument("--time-limit", type=_positive_float, default=None,
                   help=f"seconds per solve (default ${TIME_LIMIT_ENV} or {DEFAULT_TIME_LIMIT:g})")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--tol", type=_positive_float, default=None, help="relative termination tolerance")
    p.add_argument("--alpha-update", choices=("basic", "adaptive"), default=None)
    p.add_argument("--phi-switch", choices=("off", "auto", "on"), default="off",
                   help="auto: start with phi=0.8 when there are fewer samples than features")
    p.add_argument("--option", action="append", type=_parse_override, default=[],
                   metavar="KEY=VALUE", help="any SolveOptions field")


def build_parser():
    parser = argparse.ArgumentParser(prog="farsa", description="Group-sparse logistic regression solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--data", required=True, help="LIBSVM file (.gz accepted)")
    p.add_argument("--fraction", type=float, choices=GROUP_FRACTIONS, default=0.5,
                   help="number of groups as a fraction of the dimension")
    p.add_argument("--lambda-scale", type=_positive_float, default=0.1)
    p.add_argument("--solver", choices=SOLVERS, default="farsa")
    p.add_argument("--output", help="report path (default stdout)")
    p.add_argument("--trace", help="write the per-iteration trace as CSV")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_run_flags(p)

    p = sub.add_parser("grid", help="run the 8-instance grid on every dataset")
    p.add_argument("--data-dir", help="directory of LIBSVM files")
    p.add_argument("--data", nargs="*", default=[], help="explicit dataset files")
    p.add_argument("--solvers", default="farsa,pg", help="comma-separated subset of farsa,pg")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", help="summary CSV path (default stdout)")
    _add_run_flags(p)

    p = sub.add_parser("compare", help="performance metric between two runs")
    p.add_argument("reports", nargs="*", help="two JSON reports written by 'solve'")
    p.add_argument("--time-a", type=float)
    p.add_argument("--time-b", type=float)
    p.add_argument("--failed-a", action="store_true")
    p.add_argument("--failed-b", action="store_true")
    return parser


def _overrides(args):
    values = dict(args.option)
    if args.max_iter is not None:
        values["max_iter"] = args.max_iter
    if args.tol is not None:
        values["tol_rel"] = args.tol
    if args.alpha_update is not None:
        values["alpha_update"] = args.alpha_update
    SolveOptions.from_dict(values)  # fail fast on bad keys or values
    return values


def _cmd_solve(args):
    cfg = RunConfig(
        data_path=args.data, scale=args.scale, fraction=args.fraction,
        lambda_scale=args.lambda_scale, solver=args.solver, overrides=_overrides(args),
        output_format=args.format, seed=args.seed,
        time_limit=args.time_limit or default_time_limit(), phi_switch=args.phi_switch,
    )
    return run_single(cfg, output=args.output, trace_path=args.trace)


def _cmd_grid(args):
    solvers = tuple(s.strip() for s in args.solvers.split(",") if s.strip())
    if not solvers or any(s not in SOLVERS for s in solvers) or len(set(solvers)) != len(solvers):
        raise FarsaError(f"--solvers must be a subset of {','.join(SOLVERS)}")
    paths = list(args.data)
    if args.data_dir:
        paths += find_datasets(args.data_dir)
    if args.jobs < 1:
        raise FarsaError("--jobs must be at least 1")
    rows = run_grid(paths, solvers=solvers, scale=args.scale, jobs=args.jobs, seed=args.seed,
                    time_limit=args.time_limit or default_time_limit(), overrides=_overrides(args))
    text = _csv_text(rows, grid_columns(solvers))
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_compare(args):
    if args.reports:
        if len(args.reports) != 2:
            raise FarsaError("compare takes exactly two reports")
        a, b = (json.loads(Path(p).read_text(encoding="utf-8")) for p in args.reports)
        ra, rb = a["report"], b["report"]
        ok_a, ok_b = ra["status"] == OPTIMAL, rb["status"] == OPTIMAL
        result = {
            "time_metric": compare_metric(ra["elapsed_seconds"], rb["elapsed_seconds"],
                                          not ok_a, not ok_b),
            "objective_winner": compare_objectives(ra["objective_final"], rb["objective_final"]),
            "sparsity_winner": compare_sparsity(a["instance"]["zero_group_indices"],
                                                b["instance"]["zero_group_indices"]),
        }
        sys.stdout.write(json.dumps(result) + "\n")
        return EXIT_OK
    if args.time_a is None and not args.failed_a or args.time_b is None and not args.failed_b:
        raise FarsaError("give two reports or --time-a/--time-b")
    value = compare_metric(args.time_a, args.time_b, args.failed_a, args.failed_b)
    print(repr(value))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"solve": _cmd_solve, "grid": _cmd_grid, "compare": _cmd_compare}[args.command]
    try:
        return handler(args)
    except (OSError, FarsaError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
