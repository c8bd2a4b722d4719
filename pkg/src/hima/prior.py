"""Empirical-Bayes inverse-Wishart prior and the posterior-mode covariance.

The prior is ``Sigma ~ IW(lam * diag(z), lam + p + 1)`` so that ``diag(z)`` is
its mean and ``lam`` acts as a precision. Given the centered scatter ``X^T X``
of n completed rows, the posterior is ``IW(lam*diag(z) + X^T X, n + lam + p + 1)``
whose mode is

    Sigma_mode = (lam * diag(z) + X^T X) / (n + lam + 2p + 2)

and is kept in diagonal-plus-rank-n form, never as a p x p array.

``z`` is pinned to the per-column sample variances and ``lam`` maximizes the
marginal likelihood of the centered data. Every quantity needed for that
search comes from the n x n (or p x p, whichever is smaller) Gram spectrum,
so one evaluation of the objective costs O(n) once the spectrum is known.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .types import DiagPlusLowRank, PriorParams, ValidationError

log = logging.getLogger(__name__)

LOG10_LAMBDA_BOUNDS = (-3.0, 6.0)
LOG10_LAMBDA_TOL = 1e-4


@dataclass(frozen=True)
class ScatterSummary:
    ybar: np.ndarray
    X: np.ndarray
    S_diag: np.ndarray
    n: int

    @property
    def p(self) -> int:
        return self.X.shape[1]


def scatter(completed: np.ndarray) -> ScatterSummary:
    completed = np.asarray(completed, dtype=float)
    n = completed.shape[0]
    if n < 2:
        raise ValueError("scatter needs at least two rows")
    ybar = completed.mean(axis=0)
    X = completed - ybar
    return ScatterSummary(ybar, X, np.einsum("ij,ij->j", X, X), n)


def mode_denominator(n: int, lam: float, p: int) -> float:
    return n + lam + 2 * p + 2


def posterior_mode(summary: ScatterSummary, prior: PriorParams) -> DiagPlusLowRank:
    n, p = summary.n, summary.p
    return DiagPlusLowRank(
        d=prior.lam * np.asarray(prior.z, dtype=float),
        U=np.ascontiguousarray(summary.X.T),
        scale=1.0 / mode_denominator(n, prior.lam, p),
    )


def _log_mvgamma_ratio(a: float, shift: float, p: int) -> float:
    """``log Gamma_p(a + shift) - log Gamma_p(a)``; the pi terms cancel."""
    if a - (p - 1) / 2.0 <= 0:
        raise ValueError(f"multivariate gamma argument {a} invalid for dimension {p}")
    if shift == 0:
        return 0.0
    half = np.arange(p) / 2.0
    return float(np.sum(gammaln(a + shift - half) - gammaln(a - half)))


def _gram_spectrum(X: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Non-zero spectrum of ``X diag(1/z) X^T`` from the smaller Gram side."""
    Xs = X / np.sqrt(z)
    n, p = Xs.shape
    if n == 0:
        return np.zeros(0)
    G = Xs @ Xs.T if n <= p else Xs.T @ Xs
    return np.clip(np.linalg.eigvalsh(G), 0.0, None)


class LambdaObjective:
    """Log marginal likelihood as a function of lambda for fixed (X, z).

    ``profile`` drops the additive terms that do not depend on lambda; the
    search runs on it so that rescaling the data cannot move the optimum.
    """

    def __init__(self, X: np.ndarray, z: np.ndarray):
        z = np.asarray(z, dtype=float)
        if np.any(~(z > 0)):
            raise ValueError("z must be strictly positive")
        self.n, self.p = X.shape
        self.eig = _gram_spectrum(X, z)
        self.sum_log_z = float(np.sum(np.log(z)))

    def profile(self, lam: float) -> float:
        if not lam > 0:
            raise ValueError("lambda must be positive")
        n, p = self.n, self.p
        nu = lam + p + 1
        logdet_ratio = float(np.sum(np.log1p(self.eig / lam)))
        return (
            -0.5 * n * p * math.log(lam)
            - 0.5 * (nu + n) * logdet_ratio
            + _log_mvgamma_ratio(0.5 * nu, 0.5 * n, p)
        )

    def __call__(self, lam: float) -> float:
        return self.profile(lam) - 0.5 * self.n * self.p * math.log(math.pi) - 0.5 * self.n * self.sum_log_z


def log_marginal_likelihood(lam: float, summary: ScatterSummary, z: np.ndarray) -> float:
    """log of the integral of N(X | 0, Sigma) IW(Sigma | lam diag(z), lam+p+1) over Sigma.

    The determinant ``|lam diag(z) + X^T X|`` is evaluated through the
    determinant lemma on the n x n side, so nothing p x p is formed.
    """
    return LambdaObjective(summary.X, z)(lam)


def golden_section_max(
    f: Callable[[float], float], lo: float, hi: float, tol: float = LOG10_LAMBDA_TOL
) -> float:
    """Maximize a unimodal function on [lo, hi] to an interval width below ``tol``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def estimate_prior(
    summary: ScatterSummary,
    bounds: tuple[float, float] = LOG10_LAMBDA_BOUNDS,
    tol: float = LOG10_LAMBDA_TOL,
) -> PriorParams:
    """Pin ``z`` to the column variances and pick ``lam`` by marginal likelihood.

    The search is golden-section over log10(lam). A result within 1% of the
    search width from either bound is flagged on the returned params.
    """
    n = summary.n
    if np.any(~(summary.S_diag > 0)):
        bad = np.flatnonzero(~(summary.S_diag > 0))
        raise ValidationError(f"columns with zero scatter cannot carry a prior: {bad[:10].tolist()}")
    z = summary.S_diag / (n - 1)
    obj = LambdaObjective(summary.X, z)
    lo, hi = bounds
    x = golden_section_max(lambda t: obj.profile(10.0**t), lo, hi, tol)
    at_boundary = min(x - lo, hi - x) < 0.01 * (hi - lo)
    if at_boundary:
        log.debug("lambda search ended at log10(lambda)=%.4f, next to a bound", x)
    return PriorParams(10.0**x, z, at_boundary)
