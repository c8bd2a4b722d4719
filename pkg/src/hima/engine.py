"""Data-augmentation sampler that produces the M completed datasets.

Each chain alternates

* an I-step: every row's missing cells are redrawn from their conditional
  normal law given the row's observed cells and the current (mu, Sigma);
* a P-step: the prior is re-estimated from the completed matrix, Sigma is set
  to the posterior mode and mu is drawn from N(ybar, Sigma / n).

Chains are independent; chain ``m`` draws from a substream keyed on
``(seed, m)`` so results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .linalg import (
    DenseConditional,
    StructuredConditional,
    sample_conditional,
    sample_inverse_wishart,
    sample_mean_posterior,
    structured_gram,
)
from .prior import estimate_prior, posterior_mode, scatter
from .types import (
    ChainState,
    CovarianceRep,
    Dense,
    DiagPlusLowRank,
    ImputationConfig,
    IncompleteMatrix,
    NonPositiveDefinite,
    TraceLog,
    group_patterns,
    validate,
)

log = logging.getLogger(__name__)

SigmaUpdate = Literal["mode", "sample"]


def chain_rng(seed: int, m: int) -> np.random.Generator:
    """Generator for chain ``m``; index 0 is reserved for run-level choices."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(m,))))


def initial_impute(matrix: IncompleteMatrix) -> np.ndarray:
    """Fill each missing cell with its column's observed mean."""
    values, mask = matrix.values, matrix.mask
    out = np.array(values, dtype=float)
    col_means = np.nanmean(np.where(mask, values, np.nan), axis=0)
    rows, cols = np.nonzero(~mask)
    out[rows, cols] = col_means[cols]
    return out


def tracked_columns(matrix: IncompleteMatrix, config: ImputationConfig) -> np.ndarray:
    """Columns whose means are traced: explicit list, or a seeded sample of incomplete columns."""
    if config.tracked_columns is not None:
        return np.asarray(config.tracked_columns, dtype=int)
    incomplete = np.flatnonzero(~matrix.mask.all(axis=0))
    k = min(config.n_tracked, incomplete.size)
    if k == 0:
        return np.zeros(0, dtype=int)
    picked = chain_rng(config.seed, 0).choice(incomplete, size=k, replace=False)
    return np.sort(picked)


@dataclass
class ChainOutput:
    chain: int
    completed: np.ndarray
    trace: TraceLog
    prior_history: list[dict]
    timing: list[float]


@dataclass
class ImputationResult:
    completed_sets: list[np.ndarray]
    traces: TraceLog
    prior_history: list[dict]
    config_echo: ImputationConfig
    timing: list[dict]
    row_ids: tuple[str, ...] = ()
    col_ids: tuple[str, ...] = ()
    tracked: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def M(self) -> int:
        return len(self.completed_sets)


def _update_sigma(
    completed: np.ndarray,
    structured: bool,
    sigma_update: SigmaUpdate,
    rng: np.random.Generator,
):
    summary = scatter(completed)
    prior = estimate_prior(summary)
    if sigma_update == "sample":
        psi = np.diag(prior.lam * prior.z) + summary.X.T @ summary.X
        sigma: CovarianceRep = Dense(sample_inverse_wishart(psi, prior.dof + summary.n, rng))
    else:
        mode = posterior_mode(summary, prior)
        sigma = mode if structured else Dense(mode.to_dense())
    return summary, prior, sigma


def i_step(
    completed: np.ndarray,
    mask: np.ndarray,
    mu: np.ndarray,
    sigma: CovarianceRep,
    rng: np.random.Generator,
    jitter_base: float = 1e-10,
    groups=None,
) -> float:
    """Redraw every missing cell in place, rows in ascending order.

    Factorizations are shared between rows with identical masks. Returns the
    largest jitter applied to any factorization.
    """
    unique, inverse = groups if groups is not None else group_patterns(mask)
    if isinstance(sigma, DiagPlusLowRank):
        d, U = sigma.folded()
        gram = structured_gram(d, U)
        make = lambda pat: StructuredConditional(d, U, pat, gram)  # noqa: E731
    else:
        S = sigma.S
        make = lambda pat: DenseConditional(S, pat, jitter_base)  # noqa: E731

    factors: dict[int, object] = {}
    max_jitter = 0.0
    for i in range(completed.shape[0]):
        g = int(inverse[i])
        pat = unique[g]
        if pat.mis_idx.size == 0:
            continue
        try:
            if g not in factors:
                factors[g] = make(pat)
            fac = factors[g]
            row = completed[i]
            if isinstance(fac, DenseConditional):
                cp = fac.params(mu, row[pat.obs_idx], with_factor=True)
            else:
                cp = fac.params(mu, row[pat.obs_idx])
            draw = sample_conditional(cp, rng, jitter_base)
        except NonPositiveDefinite as exc:
            raise NonPositiveDefinite(f"row {i}: {exc}") from exc
        max_jitter = max(max_jitter, cp.jitter)
        row[pat.mis_idx] = draw
    return max_jitter


def run_chain(
    matrix: IncompleteMatrix,
    config: ImputationConfig,
    m: int,
    rng: np.random.Generator | None = None,
    sigma_update: SigmaUpdate = "mode",
    tracked: np.ndarray | None = None,
) -> ChainOutput:
    """Run T iterations of one chain and return its final completed matrix."""
    if rng is None:
        rng = chain_rng(config.seed, m)
    if tracked is None:
        tracked = tracked_columns(matrix, config)
    n, p = matrix.shape
    structured = config.use_structured(n, p) and sigma_update == "mode"
    mask = matrix.mask
    groups = group_patterns(mask)

    completed = initial_impute(matrix)
    summary, prior, sigma = _update_sigma(completed, structured, "mode", rng)
    state = ChainState(completed, summary.ybar.copy(), sigma, 0, rng)

    trace = TraceLog()
    history: list[dict] = []
    timing: list[float] = []
    has_missing = not mask.all()
    for t in range(1, config.T + 1):
        t0 = time.perf_counter()
        try:
            jitter = 0.0
            if has_missing:
                jitter = i_step(state.completed, mask, state.mu, state.sigma, rng, config.jitter_base, groups)
            trace.record(m, t, tracked, state.completed[:, tracked].mean(axis=0))
            summary, prior, state.sigma = _update_sigma(state.completed, structured, sigma_update, rng)
            state.mu = sample_mean_posterior(summary.ybar, state.sigma, n, rng, config.jitter_base)
        except NonPositiveDefinite as exc:
            raise NonPositiveDefinite(f"chain {m}, iteration {t}: {exc}") from exc
        state.iteration = t
        timing.append(time.perf_counter() - t0)
        history.append(
            {"chain": m, "iteration": t, "lambda": prior.lam, "at_boundary": prior.at_boundary, "jitter": jitter}
        )
    return ChainOutput(m, state.completed, trace, history, timing)


def impute(
    matrix: IncompleteMatrix,
    config: ImputationConfig,
    threads: int | None = None,
    sigma_update: SigmaUpdate = "mode",
) -> ImputationResult:
    """Run M independent chains and collect their completed matrices."""
    validate(matrix, config.drop_threshold).raise_if_fatal(matrix.col_ids)
    tracked = tracked_columns(matrix, config)

    def work(m: int) -> ChainOutput:
        return run_chain(matrix, config, m, sigma_update=sigma_update, tracked=tracked)

    chains = range(1, config.M + 1)
    if threads is not None and threads > 1 and config.M > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(work, chains))
    else:
        outputs = [work(m) for m in chains]

    traces = TraceLog()
    history: list[dict] = []
    timing: list[dict] = []
    for out in outputs:
        traces.extend(out.trace)
        history += out.prior_history
        timing += [{"chain": out.chain, "iteration": t + 1, "seconds": s} for t, s in enumerate(out.timing)]
    return ImputationResult(
        completed_sets=[out.completed for out in outputs],
        traces=traces,
        prior_history=history,
        config_echo=config,
        timing=timing,
        row_ids=matrix.row_ids,
        col_ids=matrix.col_ids,
        tracked=tracked,
    )


@dataclass
class StationarityReport:
    columns: np.ndarray
    slope: np.ndarray
    t_stat: np.ndarray
    stationary: np.ndarray
    burn_in: int

    @property
    def fraction_stationary(self) -> float:
        return float(self.stationary.mean()) if self.stationary.size else 1.0


def trend_slope(values: np.ndarray, iterations: np.ndarray | None = None) -> tuple[float, float]:
    """OLS slope of ``values`` against ``iterations`` (default 1..k) and its t-statistic."""
    y = np.asarray(values, dtype=float)
    x = np.arange(1, y.size + 1, dtype=float) if iterations is None else np.asarray(iterations, dtype=float)
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        return 0.0, 0.0
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * xc
    ssr = float(resid @ resid)
    if ssr <= 0.0:
        return slope, float(np.sign(slope)) * np.inf
    se = np.sqrt(ssr / (y.size - 2) / sxx)
    return slope, slope / se


def stationarity_check(trace: TraceLog, burn_in: int) -> StationarityReport:
    """Flag tracked columns whose post-burn-in mean trace still trends.

    For each column, all post-burn-in records (every chain) enter one OLS fit
    of mean on iteration; the column is stationary when |t| < 2.
    """
    arr = trace.as_arrays()
    if len(trace) == 0:
        empty = np.zeros(0)
        return StationarityReport(empty.astype(int), empty, empty, empty.astype(bool), burn_in)
    T = int(arr["iteration"].max())
    if T <= burn_in + 2:
        raise ValueError(f"need more than burn_in + 2 = {burn_in + 2} iterations, trace has {T}")
    cols = np.unique(arr["column"])
    slopes, tstats = [], []
    for j in cols:
        sel = (arr["column"] == j) & (arr["iteration"] > burn_in)
        s, ts = trend_slope(arr["mean"][sel], arr["iteration"][sel])
        slopes.append(s)
        tstats.append(ts)
    tstats = np.asarray(tstats)
    return StationarityReport(cols, np.asarray(slopes), tstats, np.abs(tstats) < 2.0, burn_in)
