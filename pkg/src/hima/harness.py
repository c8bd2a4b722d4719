"""Data preparation and the semi-synthetic masking generator.

Preparation drops columns with too many missing cells and removes per-row
location/scale differences. The masking generator hides a random number of
observed cells per column so imputations can be scored against known values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .types import IncompleteMatrix, TruthCells, ValidationError

log = logging.getLogger(__name__)


def drop_high_missing(matrix: IncompleteMatrix, threshold: float = 0.40) -> tuple[IncompleteMatrix, list[str]]:
    """Remove every column whose missing rate exceeds ``threshold``."""
    rate = 1.0 - matrix.mask.mean(axis=0)
    drop = rate > threshold
    if drop.all():
        raise ValidationError(f"every column exceeds the missing-rate threshold {threshold}")
    dropped = [matrix.col_ids[j] for j in np.flatnonzero(drop)]
    log.info("dropped %d of %d columns (%.2f%%)", len(dropped), matrix.p, 100.0 * len(dropped) / matrix.p)
    return matrix.select_columns(~drop), dropped


@dataclass(frozen=True)
class AlignmentTransform:
    """Per-row affine map ``aligned = shift + scale * raw``."""

    shift: np.ndarray
    scale: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.shift[:, None] + self.scale[:, None] * values

    def invert(self, values: np.ndarray) -> np.ndarray:
        return (values - self.shift[:, None]) / self.scale[:, None]


def align_subjects(matrix: IncompleteMatrix) -> tuple[IncompleteMatrix, AlignmentTransform]:
    """Map each row's observed entries to the grand location and spread.

    The target mean is the average row mean and the target SD is the root mean
    row variance (population form), so an already aligned matrix maps to itself.
    """
    vals = np.where(matrix.mask, matrix.values, np.nan)
    counts = matrix.mask.sum(axis=1)
    short = np.flatnonzero(counts < 2)
    if short.size:
        raise ValidationError(f"row {matrix.row_ids[short[0]]} has fewer than two observed entries")
    row_mean = np.nanmean(vals, axis=1)
    row_sd = np.nanstd(vals, axis=1)
    flat = np.flatnonzero(~(row_sd > 0))
    if flat.size:
        raise ValidationError(f"row {matrix.row_ids[flat[0]]} has zero spread over its observed entries")
    target_mean = row_mean.mean()
    target_sd = np.sqrt(np.mean(row_sd**2))
    scale = target_sd / row_sd
    shift = target_mean - scale * row_mean
    tf = AlignmentTransform(shift, scale)
    return matrix.with_values(tf.apply(vals)), tf


@dataclass(frozen=True)
class MaskPlan:
    """Cells removed per column (row indices), with the generator settings."""

    removed: dict[int, np.ndarray]
    t_max: int
    seed: int

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(self.removed[j]) for j in sorted(self.removed)])


def make_semisynthetic(
    matrix: IncompleteMatrix, t_max: int = 8, seed: int = 0
) -> tuple[IncompleteMatrix, MaskPlan, TruthCells]:
    """Hide t ~ Uniform{1..t_max} observed cells in every column.

    Cells are chosen uniformly among the column's observed rows. Returns the
    masked matrix, the plan, and the hidden values.
    """
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    n_obs = matrix.mask.sum(axis=0)
    short = np.flatnonzero(n_obs <= t_max)
    if short.size:
        raise ValidationError(
            f"column {matrix.col_ids[short[0]]} has {n_obs[short[0]]} observed cells, need more than {t_max}"
        )
    rng = np.random.default_rng(seed)
    mask = matrix.mask.copy()
    removed = {}
    rows_out, cols_out = [], []
    for j in range(matrix.p):
        t = int(rng.integers(1, t_max + 1))
        rows = np.sort(rng.choice(np.flatnonzero(mask[:, j]), size=t, replace=False))
        removed[j] = rows
        mask[rows, j] = False
        rows_out.append(rows)
        cols_out.append(np.full(t, j))
    rows_all = np.concatenate(rows_out)
    cols_all = np.concatenate(cols_out)
    truth = TruthCells(rows_all, cols_all, matrix.values[rows_all, cols_all])
    masked = IncompleteMatrix(matrix.values, mask, matrix.row_ids, matrix.col_ids)
    return masked, MaskPlan(removed, t_max, seed), truth


def ar1_covariance(p: int, rho: float) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def simulate_ar1(n: int, p: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Rows from N(0, AR(1)) without forming the p x p covariance."""
    out = np.empty((n, p))
    out[:, 0] = rng.standard_normal(n)
    innov = np.sqrt(1.0 - rho**2)
    eps = rng.standard_normal((n, p - 1))
    for j in range(1, p):
        out[:, j] = rho * out[:, j - 1] + innov * eps[:, j - 1]
    return out


def mri_like_mask(
    n: int,
    p: int,
    rng: np.random.Generator,
    base_rate: float = 0.1460,
    heavy_fraction: float = 0.0317,
    heavy_rate: float = 0.75,
) -> np.ndarray:
    """Observed-cell mask with an MRI-like spread of column missingness.

    A ``heavy_fraction`` of columns lose ``heavy_rate`` of their rows (the ones
    a 40% threshold later drops); the remaining columns share the rest of the
    ``base_rate`` budget. Cells are missing completely at random.
    """
    n_heavy = int(round(heavy_fraction * p))
    heavy = rng.choice(p, size=n_heavy, replace=False)
    light_rate = (base_rate * p - heavy_rate * n_heavy) / (p - n_heavy)
    if not 0 <= light_rate < 1:
        raise ValueError("inconsistent missingness budget")
    rates = np.full(p, light_rate)
    rates[heavy] = heavy_rate
    mask = rng.random((n, p)) >= rates
    # keep at least two observed cells per column
    for j in np.flatnonzero(mask.sum(axis=0) < 2):
        mask[rng.choice(n, size=2, replace=False), j] = True
    return mask
