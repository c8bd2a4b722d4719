"""Shared data containers: incomplete matrices, missingness patterns,
covariance representations and run configuration.

Nothing in here does numerical work beyond shape bookkeeping and the
validation pass; the algorithms live in ``linalg``, ``prior`` and ``engine``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence, Union

import numpy as np

CovariancePath = Literal["dense", "structured", "auto"]


class ValidationError(ValueError):
    """Raised when an input matrix has fatal findings."""


class NonPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a factorization fails after the full jitter escalation."""


@dataclass(frozen=True)
class IncompleteMatrix:
    """An n x p matrix with an authoritative observed/missing mask.

    ``mask[i, j]`` is True when cell (i, j) is observed. Missing cells hold a
    quiet NaN in ``values``, but the mask (not the NaN) decides missingness.
    """

    values: np.ndarray
    mask: np.ndarray
    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        if mask.shape != values.shape:
            raise ValueError(f"mask shape {mask.shape} != values shape {values.shape}")
        n, p = values.shape
        row_ids = tuple(str(r) for r in self.row_ids)
        col_ids = tuple(str(c) for c in self.col_ids)
        if len(row_ids) != n or len(col_ids) != p:
            raise ValueError("row_ids/col_ids length does not match the matrix shape")
        values[~mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "col_ids", col_ids)

    @classmethod
    def from_array(cls, values, row_ids=None, col_ids=None) -> "IncompleteMatrix":
        """Build from an array where NaN marks missing cells."""
        values = np.asarray(values, dtype=float)
        n, p = values.shape
        if row_ids is None:
            row_ids = [f"r{i}" for i in range(n)]
        if col_ids is None:
            col_ids = [f"c{j}" for j in range(p)]
        return cls(values, ~np.isnan(values), tuple(row_ids), tuple(col_ids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def missing_rate(self) -> float:
        return float(1.0 - self.mask.mean())

    def select_columns(self, keep) -> "IncompleteMatrix":
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        return IncompleteMatrix(
            self.values[:, keep],
            self.mask[:, keep],
            self.row_ids,
            tuple(self.col_ids[j] for j in keep),
        )

    def with_values(self, values, mask=None) -> "IncompleteMatrix":
        return IncompleteMatrix(
            values, self.mask if mask is None else mask, self.row_ids, self.col_ids
        )


@dataclass(frozen=True)
class MissingnessPattern:
    """Observed and missing column indices of one row (both sorted)."""

    obs_idx: np.ndarray
    mis_idx: np.ndarray

    @classmethod
    def from_mask_row(cls, mask_row) -> "MissingnessPattern":
        mask_row = np.asarray(mask_row, dtype=bool)
        return cls(np.flatnonzero(mask_row), np.flatnonzero(~mask_row))

    @property
    def p(self) -> int:
        return len(self.obs_idx) + len(self.mis_idx)


@dataclass(frozen=True)
class Dense:
    """Dense symmetric covariance matrix."""

    S: np.ndarray

    @property
    def dim(self) -> int:
        return self.S.shape[0]

    def to_dense(self) -> np.ndarray:
        return self.S

    def diagonal(self) -> np.ndarray:
        return np.diag(self.S).copy()

    def scaled(self, c: float) -> "Dense":
        return Dense(self.S * c)


@dataclass(frozen=True)
class DiagPlusLowRank:
    """Covariance ``scale * (diag(d) + U @ U.T)`` with d > 0 and U of shape (p, k)."""

    d: np.ndarray
    U: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        if self.U.ndim != 2 or self.U.shape[0] != self.d.shape[0]:
            raise ValueError(f"U shape {self.U.shape} incompatible with d of length {len(self.d)}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def dim(self) -> int:
        return self.d.shape[0]

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def to_dense(self) -> np.ndarray:
        return self.scale * (np.diag(self.d) + self.U @ self.U.T)

    def diagonal(self) -> np.ndarray:
        return self.scale * (self.d + np.einsum("ij,ij->i", self.U, self.U))

    def folded(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (d, U) with the scale absorbed."""
        return self.scale * self.d, np.sqrt(self.scale) * self.U

    def scaled(self, c: float) -> "DiagPlusLowRank":
        return DiagPlusLowRank(self.d, self.U, self.scale * c)


CovarianceRep = Union[Dense, DiagPlusLowRank]


@dataclass(frozen=True)
class PriorParams:
    """Inverse-Wishart prior in the (precision, mean) parameterization.

    The prior mean matrix is ``diag(z)``; degrees of freedom are ``lam + p + 1``.
    ``at_boundary`` records that the lambda search ended next to a bound.
    """

    lam: float
    z: np.ndarray
    at_boundary: bool = False

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if np.any(~(np.asarray(self.z) > 0)):
            raise ValueError("all z entries must be positive")

    @property
    def dof(self) -> float:
        return self.lam + len(self.z) + 1


@dataclass(frozen=True)
class ImputationConfig:
    M: int = 5
    T: int = 20
    seed: int = 0
    drop_threshold: float = 0.40
    covariance_path: CovariancePath = "auto"
    jitter_base: float = 1e-10
    n_tracked: int = 8
    tracked_columns: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.M < 1 or self.T < 1:
            raise ValueError("M and T must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 0 < self.drop_threshold <= 1:
            raise ValueError("drop_threshold must lie in (0, 1]")
        if self.covariance_path not in ("dense", "structured", "auto"):
            raise ValueError(f"unknown covariance_path {self.covariance_path!r}")
        if not self.jitter_base > 0:
            raise ValueError("jitter_base must be positive")
        if self.n_tracked < 0:
            raise ValueError("n_tracked must be non-negative")

    def use_structured(self, n: int, p: int) -> bool:
        if self.covariance_path == "auto":
            return p > 2 * n
        return self.covariance_path == "structured"


@dataclass
class ChainState:
    """Mutable state of one chain; owned by a single worker."""

    completed: np.ndarray
    mu: np.ndarray
    sigma: CovarianceRep
    iteration: int
    rng: np.random.Generator


@dataclass
class TraceLog:
    """Long-format records (chain, iteration, column index, column mean)."""

    chain: list[int] = field(default_factory=list)
    iteration: list[int] = field(default_factory=list)
    column: list[int] = field(default_factory=list)
    mean: list[float] = field(default_factory=list)

    def record(self, m: int, t: int, columns: Sequence[int], means: Sequence[float]):
        for j, v in zip(columns, means):
            self.chain.append(m)
            self.iteration.append(t)
            self.column.append(int(j))
            self.mean.append(float(v))

    def extend(self, other: "TraceLog"):
        self.chain += other.chain
        self.iteration += other.iteration
        self.column += other.column
        self.mean += other.mean

    def __len__(self) -> int:
        return len(self.chain)

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {
            "chain": np.asarray(self.chain, dtype=int),
            "iteration": np.asarray(self.iteration, dtype=int),
            "column": np.asarray(self.column, dtype=int),
            "mean": np.asarray(self.mean, dtype=float),
        }

    def series(self, column: int) -> dict[int, np.ndarray]:
        """Per-chain mean trace of one column, ordered by iteration."""
        arr = self.as_arrays()
        out = {}
        for m in np.unique(arr["chain"]):
            sel = (arr["chain"] == m) & (arr["column"] == column)
            order = np.argsort(arr["iteration"][sel], kind="stable")
            out[int(m)] = arr["mean"][sel][order]
        return out


@dataclass
class ValidationReport:
    missing_rate: np.ndarray
    drop_threshold: float
    flagged_for_drop: list[int]
    fully_missing_columns: list[int]
    constant_columns: list[int]
    nonfinite_cells: list[tuple[int, int]]
    fully_missing_rows: list[int]

    @property
    def fatal(self) -> list[str]:
        msgs = []
        if self.fully_missing_columns:
            msgs.append(f"columns fully missing: {self.fully_missing_columns[:10]}")
        if self.constant_columns:
            msgs.append(f"columns with zero observed variance: {self.constant_columns[:10]}")
        if self.nonfinite_cells:
            msgs.append(f"non-finite observed cells (row, col): {self.nonfinite_cells[:10]}")
        return msgs

    @property
    def accepted(self) -> bool:
        return not self.fatal

    def raise_if_fatal(self, col_ids: Sequence[str] | None = None):
        if self.accepted:
            return
        msgs = self.fatal
        if col_ids is not None:
            named = self.fully_missing_columns + self.constant_columns
            msgs.append("offending column ids: " + ", ".join(col_ids[j] for j in named[:10]))
        raise ValidationError("; ".join(msgs))


def validate(matrix: IncompleteMatrix, drop_threshold: float = 0.40) -> ValidationReport:
    """Check a matrix before imputation.

    Fatal: a fully missing column, an observed column with zero variance, or a
    non-finite value in a cell marked observed. Columns whose missing rate
    exceeds ``drop_threshold`` and fully missing rows are reported but allowed.
    """
    values, mask = matrix.values, matrix.mask
    n, p = values.shape
    n_obs = mask.sum(axis=0)
    missing_rate = 1.0 - n_obs / n

    bad = mask & ~np.isfinite(values)
    nonfinite = [(int(i), int(j)) for i, j in zip(*np.nonzero(bad))]

    fully_missing = [int(j) for j in np.flatnonzero(n_obs == 0)]
    constant = []
    for j in np.flatnonzero(n_obs > 0):
        col = values[mask[:, j] & np.isfinite(values[:, j]), j]
        if col.size == 0 or np.all(col == col[0]):
            constant.append(int(j))

    return ValidationReport(
        missing_rate=missing_rate,
        drop_threshold=drop_threshold,
        flagged_for_drop=[int(j) for j in np.flatnonzero(missing_rate > drop_threshold)],
        fully_missing_columns=fully_missing,
        constant_columns=constant,
        nonfinite_cells=nonfinite,
        fully_missing_rows=[int(i) for i in np.flatnonzero(~mask.any(axis=1))],
    )


def patterns(matrix: IncompleteMatrix) -> list[MissingnessPattern]:
    """One pattern per row; rows with identical masks share the same object."""
    unique, inverse = group_patterns(matrix.mask)
    return [unique[k] for k in inverse]


def group_patterns(mask: np.ndarray) -> tuple[list[MissingnessPattern], np.ndarray]:
    """Deduplicate row masks. Returns the unique patterns and the row -> pattern index."""
    uniq, inverse = np.unique(np.asarray(mask, dtype=bool), axis=0, return_inverse=True)
    return [MissingnessPattern.from_mask_row(r) for r in uniq], inverse.ravel()


@dataclass(frozen=True)
class TruthCells:
    """Ground-truth values of artificially removed cells (row, column, value)."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=int)
        cols = np.asarray(self.cols, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if not rows.shape == cols.shape == values.shape or rows.ndim != 1:
            raise ValueError("rows, cols and values must be 1-D arrays of equal length")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.rows.size
