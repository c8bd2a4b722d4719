"""CSV and JSON file formats.

Matrix files: UTF-8, LF line endings, header ``row_id,<col ids...>``, one row
per subject with its id first, missing cells written as ``NA`` and numbers
with 17 significant digits so that parsing reproduces them exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import ImputationResult
from .harness import MaskPlan
from .types import ImputationConfig, IncompleteMatrix, TraceLog, TruthCells, ValidationError

NA = "NA"


class FormatError(ValidationError):
    """Malformed input file contents."""


def format_number(x: float) -> str:
    return format(float(x), ".17g")


def _parse_number(token: str, where: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"cannot parse {token!r} as a number at {where}") from None


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def read_matrix(path) -> IncompleteMatrix:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = rows[0]
    if not header or header[0] != "row_id":
        raise FormatError(f"{path}: header must start with 'row_id'")
    col_ids = header[1:]
    if not col_ids:
        raise FormatError(f"{path}: no data columns")
    if len(set(col_ids)) != len(col_ids):
        raise FormatError(f"{path}: duplicate column ids")
    p = len(col_ids)
    row_ids, values, mask = [], [], []
    for lineno, rec in enumerate(rows[1:], start=2):
        if not rec:
            continue
        if len(rec) != p + 1:
            raise FormatError(f"{path}:{lineno}: expected {p + 1} fields, found {len(rec)}")
        row_ids.append(rec[0])
        vals, obs = [], []
        for j, tok in enumerate(rec[1:]):
            if tok == NA:
                vals.append(math.nan)
                obs.append(False)
            else:
                vals.append(_parse_number(tok, f"{path}:{lineno}, column {col_ids[j]}"))
                obs.append(True)
        values.append(vals)
        mask.append(obs)
    if not row_ids:
        raise FormatError(f"{path}: no data rows")
    return IncompleteMatrix(np.array(values), np.array(mask), tuple(row_ids), tuple(col_ids))


def write_matrix(path, values: np.ndarray, row_ids: Sequence[str], col_ids: Sequence[str], mask=None):
    values = np.asarray(values)
    if mask is None:
        mask = np.ones(values.shape, dtype=bool)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["row_id", *col_ids])
        for rid, vals, obs in zip(row_ids, values, mask):
            w.writerow([rid, *(format_number(v) if o else NA for v, o in zip(vals, obs))])


def write_incomplete(path, matrix: IncompleteMatrix):
    write_matrix(path, matrix.values, matrix.row_ids, matrix.col_ids, matrix.mask)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([format_number(v) if isinstance(v, float) else v for v in r])


def read_rows(path, required: Sequence[str]) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise FormatError(f"{path}: missing columns {missing}")
        return list(reader)


def write_truth(path, truth: TruthCells, row_ids: Sequence[str], col_ids: Sequence[str]):
    write_rows(
        path,
        ["column_id", "row_id", "value"],
        ((col_ids[c], row_ids[r], float(v)) for r, c, v in zip(truth.rows, truth.cols, truth.values)),
    )


def read_truth(path, row_ids: Sequence[str], col_ids: Sequence[str]) -> TruthCells:
    """Read truth cells and map their ids to indices of the given axes.

    Cells whose column is not in ``col_ids`` are skipped (e.g. dropped columns);
    an unknown row id is an error.
    """
    rindex = {r: i for i, r in enumerate(row_ids)}
    cindex = {c: j for j, c in enumerate(col_ids)}
    rows, cols, vals = [], [], []
    for k, rec in enumerate(read_rows(path, ["column_id", "row_id", "value"]), start=2):
        if rec["row_id"] not in rindex:
            raise FormatError(f"{path}:{k}: unknown row id {rec['row_id']!r}")
        if rec["column_id"] not in cindex:
            continue
        rows.append(rindex[rec["row_id"]])
        cols.append(cindex[rec["column_id"]])
        vals.append(_parse_number(rec["value"], f"{path}:{k}"))
    return TruthCells(np.array(rows, dtype=int), np.array(cols, dtype=int), np.array(vals, dtype=float))


def write_mask_plan(path, plan: MaskPlan, row_ids: Sequence[str], col_ids: Sequence[str]):
    write_rows(
        path,
        ["column_id", "row_id"],
        ((col_ids[j], row_ids[i]) for j in sorted(plan.removed) for i in plan.removed[j]),
    )


def write_trace(path, trace: TraceLog, col_ids: Sequence[str]):
    write_rows(
        path,
        ["chain", "iteration", "column_id", "mean"],
        ((m, t, col_ids[j], v) for m, t, j, v in zip(trace.chain, trace.iteration, trace.column, trace.mean)),
    )


def read_trace(path) -> tuple[TraceLog, list[str]]:
    """Parse a trace file; column ids are mapped to indices in first-seen order."""
    trace = TraceLog()
    ids: dict[str, int] = {}
    for k, rec in enumerate(read_rows(path, ["chain", "iteration", "column_id", "mean"]), start=2):
        try:
            m, t = int(rec["chain"]), int(rec["iteration"])
        except ValueError:
            raise FormatError(f"{path}:{k}: chain and iteration must be integers") from None
        j = ids.setdefault(rec["column_id"], len(ids))
        trace.record(m, t, [j], [_parse_number(rec["mean"], f"{path}:{k}")])
    if len(trace) == 0:
        raise FormatError(f"{path}: trace has no records")
    return trace, list(ids)


@dataclass
class RunConfig:
    """Everything an ``impute`` run needs; paths are resolved on load."""

    input: str
    output_dir: str
    M: int = 5
    T: int = 20
    seed: int = 0
    drop_threshold: float = 0.40
    covariance_path: str = "auto"
    jitter_base: float = 1e-10
    n_tracked: int = 8
    tracked_columns: list[str] | None = None
    threads: int | None = None
    align: bool = False
    baselines: list[str] = field(default_factory=list)

    def __post_init__(self):
        unknown = set(self.baselines) - {"mean", "dense_gibbs"}
        if unknown:
            raise ValidationError(f"unknown baselines: {sorted(unknown)}")
        self.imputation_config(None)

    def imputation_config(self, tracked: Sequence[int] | None) -> ImputationConfig:
        try:
            return ImputationConfig(
                M=self.M,
                T=self.T,
                seed=self.seed,
                drop_threshold=self.drop_threshold,
                covariance_path=self.covariance_path,
                jitter_base=self.jitter_base,
                n_tracked=self.n_tracked,
                tracked_columns=None if tracked is None else tuple(int(j) for j in tracked),
            )
        except ValueError as exc:
            raise ValidationError(f"invalid configuration: {exc}") from None

    def to_json(self) -> dict:
        return asdict(self)


MANIFEST_VERSION = 1


def load_run_config(path) -> RunConfig:
    """Load a run config, or the ``config`` block of a run manifest.

    Relative paths are resolved against the file's directory; unknown keys
    are rejected.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    if "manifest_version" in doc:
        doc = doc.get("config")
        if not isinstance(doc, dict):
            raise FormatError(f"{path}: manifest has no config block")
    allowed = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise FormatError(f"{path}: unknown config keys {unknown}")
    for key in ("input", "output_dir"):
        if key not in doc:
            raise FormatError(f"{path}: missing required key {key!r}")
    base = path.parent
    doc = dict(doc)
    for key in ("input", "output_dir"):
        doc[key] = str((base / doc[key]).resolve())
    try:
        return RunConfig(**doc)
    except TypeError as exc:
        raise FormatError(f"{path}: {exc}") from None


def imputed_name(m: int, M: int, prefix: str = "imputed") -> str:
    return f"{prefix}_{m:0{max(3, len(str(M)))}d}.csv"


def write_result(out_dir, result: ImputationResult, prefix: str = "imputed") -> list[str]:
    """Write completed sets and the run's logs; returns the written file names."""
    out_dir = Path(out_dir)
    names = []
    for m, comp in enumerate(result.completed_sets, start=1):
        name = imputed_name(m, result.M, prefix)
        write_matrix(out_dir / name, comp, result.row_ids, result.col_ids)
        names.append(name)
    if prefix != "imputed":
        return names
    write_trace(out_dir / "trace.csv", result.traces, result.col_ids)
    write_rows(
        out_dir / "prior_history.csv",
        ["chain", "iteration", "lambda", "at_boundary", "jitter"],
        ((h["chain"], h["iteration"], float(h["lambda"]), int(h["at_boundary"]), float(h["jitter"]))
         for h in result.prior_history),
    )
    write_rows(
        out_dir / "timing.csv",
        ["chain", "iteration", "seconds"],
        ((r["chain"], r["iteration"], float(r["seconds"])) for r in result.timing),
    )
    return names + ["trace.csv", "prior_history.csv", "timing.csv"]


def write_json(path, doc: dict):
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
