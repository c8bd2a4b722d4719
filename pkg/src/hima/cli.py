"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .engine import impute, stationarity_check
from .evalkit import DENSE_GIBBS_MAX_P, dense_iw_gibbs, evaluate, mean_impute_baseline, reference_sds
from .harness import align_subjects, drop_high_missing, make_semisynthetic
from .io import (
    MANIFEST_VERSION,
    RunConfig,
    load_run_config,
    read_matrix,
    read_rows,
    read_trace,
    read_truth,
    write_incomplete,
    write_json,
    write_mask_plan,
    write_matrix,
    write_result,
    write_rows,
    write_truth,
)
from .types import IncompleteMatrix, NonPositiveDefinite, ValidationError, validate

log = logging.getLogger("hima")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _fail(code: int, msg: str) -> int:
    print(f"hima: error: {msg}", file=sys.stderr)
    return code


def _guarded(fn):
    def wrapper(args) -> int:
        try:
            return fn(args)
        except ValidationError as exc:
            return _fail(EXIT_INVALID, str(exc))
        except NonPositiveDefinite as exc:
            return _fail(EXIT_NUMERICAL, f"numerical failure: {exc}")
        except OSError as exc:
            return _fail(EXIT_IO, str(exc))

    return wrapper


def run_impute(cfg: RunConfig, threads: int | None = None) -> dict:
    """Execute one configured imputation run and write every output file."""
    raw = read_matrix(cfg.input)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    matrix, dropped = drop_high_missing(raw, cfg.drop_threshold)
    validate(matrix, cfg.drop_threshold).raise_if_fatal(matrix.col_ids)
    if matrix.mask.all():
        log.warning("input has no missing cells; every imputed set will equal the input")

    tracked = None
    if cfg.tracked_columns is not None:
        index = {c: j for j, c in enumerate(matrix.col_ids)}
        unknown = [c for c in cfg.tracked_columns if c not in index]
        if unknown:
            raise ValidationError(f"tracked columns not present after filtering: {unknown[:10]}")
        tracked = [index[c] for c in cfg.tracked_columns]
    config = cfg.imputation_config(tracked)

    work, transform = matrix, None
    if cfg.align:
        work, transform = align_subjects(matrix)

    threads = threads if threads is not None else (cfg.threads or os.cpu_count() or 1)
    t0 = time.perf_counter()
    result = impute(work, config, threads=threads)
    elapsed = time.perf_counter() - t0

    restore = np.where(matrix.mask, matrix.values, 0.0)
    for k, comp in enumerate(result.completed_sets):
        if transform is not None:
            comp = transform.invert(comp)
        result.completed_sets[k] = np.where(matrix.mask, restore, comp)

    files = write_result(out, result)
    if "mean" in cfg.baselines:
        write_matrix(out / "baseline_mean.csv", mean_impute_baseline(matrix), matrix.row_ids, matrix.col_ids)
        files.append("baseline_mean.csv")
    if "dense_gibbs" in cfg.baselines:
        if matrix.p > DENSE_GIBBS_MAX_P:
            log.warning("skipping dense_gibbs baseline: p=%d exceeds %d", matrix.p, DENSE_GIBBS_MAX_P)
        else:
            gibbs = dense_iw_gibbs(work, config, threads=threads)
            for k, comp in enumerate(gibbs.completed_sets):
                if transform is not None:
                    comp = transform.invert(comp)
                gibbs.completed_sets[k] = np.where(matrix.mask, restore, comp)
            files += write_result(out, gibbs, prefix="gibbs")

    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "config": cfg.to_json(),
        "seed": cfg.seed,
        "shape": {"n": raw.n, "p_input": raw.p, "p_imputed": matrix.p},
        "dropped_columns": dropped,
        "tracked_columns": [matrix.col_ids[j] for j in result.tracked],
        "outputs": files,
        "wall_seconds": elapsed,
        "versions": {
            "hima": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    write_json(out / "run_manifest.json", manifest)
    return manifest


@_guarded
def cmd_impute(args) -> int:
    try:
        cfg = load_run_config(args.config)
    except FileNotFoundError as exc:
        return _fail(EXIT_IO, str(exc))
    if args.out is not None:
        cfg.output_dir = str(Path(args.out).resolve())
    manifest = run_impute(cfg, threads=args.threads)
    print(f"wrote {len(manifest['outputs'])} files to {cfg.output_dir}")
    return EXIT_OK


@_guarded
def cmd_mask(args) -> int:
    matrix = read_matrix(args.input)
    masked, plan, truth = make_semisynthetic(matrix, args.t_max, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_incomplete(out / "masked.csv", masked)
    write_mask_plan(out / "mask_plan.csv", plan, matrix.row_ids, matrix.col_ids)
    write_truth(out / "truth.csv", truth, matrix.row_ids, matrix.col_ids)
    summary = {
        "t_max": args.t_max,
        "seed": args.seed,
        "columns": matrix.p,
        "removed_cells": len(truth),
        "mean_removed_per_column": float(plan.counts.mean()),
        "missing_rate_before": matrix.missing_rate,
        "missing_rate_after": masked.missing_rate,
    }
    write_json(out / "mask_summary.json", summary)
    print(
        f"removed {len(truth)} cells, {summary['mean_removed_per_column']:.3f} per column; "
        f"missing rate {100 * summary['missing_rate_before']:.2f}% -> {100 * summary['missing_rate_after']:.2f}%"
    )
    return EXIT_OK


def _load_sets(directory: Path, prefix: str, original: IncompleteMatrix):
    files = sorted(directory.glob(f"{prefix}_*.csv"))
    sets, col_ids = [], None
    for f in files:
        mat = read_matrix(f)
        if mat.row_ids != original.row_ids:
            raise ValidationError(f"{f.name}: row ids differ from the original matrix")
        if col_ids is None:
            col_ids = mat.col_ids
        elif mat.col_ids != col_ids:
            raise ValidationError(f"{f.name}: columns differ from the other imputed sets")
        if not mat.mask.all():
            raise ValidationError(f"{f.name}: imputed set still has missing cells")
        sets.append(mat.values)
    return sets, col_ids


def _timing_total(path: Path) -> float | None:
    if not path.exists():
        return None
    return float(sum(float(r["seconds"]) for r in read_rows(path, ["seconds"])))


@_guarded
def cmd_eval(args) -> int:
    imputed_dir = Path(args.imputed)
    if not imputed_dir.is_dir():
        return _fail(EXIT_IO, f"{imputed_dir} is not a directory")
    original = read_matrix(args.original)
    sets, col_ids = _load_sets(imputed_dir, "imputed", original)
    if not sets:
        raise ValidationError(f"no imputed_*.csv files in {imputed_dir}")
    missing_cols = [c for c in col_ids if c not in original.col_ids]
    if missing_cols:
        raise ValidationError(f"imputed columns not in the original matrix: {missing_cols[:10]}")
    keep = [original.col_ids.index(c) for c in col_ids]
    reference = original.select_columns(keep)
    truth = read_truth(args.truth, reference.row_ids, reference.col_ids)
    if len(truth) == 0:
        raise ValidationError("truth file has no cells in the imputed columns")
    if not reference.mask[truth.rows, truth.cols].all():
        raise ValidationError("truth cells must be observed in the original matrix")
    sds = reference_sds(reference)

    mask = reference.mask.copy()
    mask[truth.rows, truth.cols] = False
    masked = IncompleteMatrix(reference.values, mask, reference.row_ids, reference.col_ids)

    methods = {}
    rep = evaluate(sets, truth, sds)
    methods["hima"] = {**rep.as_dict(), "seconds": _timing_total(imputed_dir / "timing.csv")}

    t0 = time.perf_counter()
    baseline = mean_impute_baseline(masked)
    secs = time.perf_counter() - t0
    methods["mean"] = {**evaluate([baseline], truth, sds).as_dict(), "seconds": secs}

    gibbs_sets, gibbs_cols = _load_sets(imputed_dir, "gibbs", original)
    if gibbs_sets:
        if gibbs_cols != col_ids:
            raise ValidationError("gibbs sets have different columns from the imputed sets")
        methods["dense_gibbs"] = {**evaluate(gibbs_sets, truth, sds).as_dict(), "seconds": None}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "metrics.json", {"methods": methods, "n_truth_cells": len(truth)})
    header = ["method", "wMAE_mean", "wMAE_sd", "wMSE_mean", "wMSE_sd", "wMBE", "n_sets", "n_cells", "seconds"]
    write_rows(
        out / "metrics.csv",
        header,
        ([name] + ["" if m[k] is None else m[k] for k in header[1:]] for name, m in methods.items()),
    )
    for name, m in methods.items():
        print(f"{name:12s} wMAE {m['wMAE_mean']:.4f}±{m['wMAE_sd']:.4f}  wMSE {m['wMSE_mean']:.4f}±{m['wMSE_sd']:.4f}  wMBE {m['wMBE']:+.4f}")
    return EXIT_OK


@_guarded
def cmd_diag(args) -> int:
    trace, col_ids = read_trace(args.trace)
    try:
        report = stationarity_check(trace, args.burn_in)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(
        out / "stationarity.csv",
        ["column_id", "slope", "t_stat", "verdict"],
        (
            (col_ids[j], float(s), float(t), "stationary" if ok else "non-stationary")
            for j, s, t, ok in zip(report.columns, report.slope, report.t_stat, report.stationary)
        ),
    )
    write_rows(
        out / "plotdata.csv",
        ["chain", "iteration", "column_id", "mean"],
        ((m, t, col_ids[j], v) for m, t, j, v in zip(trace.chain, trace.iteration, trace.column, trace.mean)),
    )
    print(f"{report.fraction_stationary:.1%} of {report.columns.size} tracked columns stationary after burn-in {args.burn_in}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hima", description="High-dimensional Bayesian multiple imputation.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("impute", help="run the sampler from a JSON config or a run manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the configured output directory")
    p.add_argument("--threads", type=int, help="chain workers (default: available CPUs)")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("mask", help="hide observed cells to build a semi-synthetic benchmark")
    p.add_argument("--input", required=True)
    p.add_argument("--t-max", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("eval", help="score imputed sets against hidden truth")
    p.add_argument("--imputed", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--original", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diag", help="trend check of traced column means")
    p.add_argument("--trace", required=True)
    p.add_argument("--burn-in", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diag)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
