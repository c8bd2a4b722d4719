"""Conditional multivariate-normal algebra and sampling.

Two routes compute the same conditional law of the missing block given the
observed block:

* a dense route that factors the observed sub-block of a p x p covariance, and
* a structured route for ``diag(d) + U U^T`` that only ever factors a k x k
  matrix, via the Woodbury identity.

The dense route is the reference; the structured route is what makes large p
tractable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .types import CovarianceRep, Dense, MissingnessPattern, NonPositiveDefinite

JITTER_STEPS = (0.0, 1.0, 10.0, 100.0, 1000.0)


@dataclass(frozen=True)
class CholeskyFactor:
    L: np.ndarray
    jitter_applied: float


def cholesky_psd(A: np.ndarray, jitter_base: float = 1e-10) -> CholeskyFactor:
    """Lower Cholesky factor of ``A + j * mean(diag(A)) * I``.

    ``j`` is the first of 0, b, 10b, 100b, 1000b (b = ``jitter_base``) for
    which the factorization succeeds. An all-zero matrix factors to zero.
    """
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    if k == 0 or not np.any(A):
        return CholeskyFactor(np.zeros_like(A), 0.0)
    level = float(np.mean(np.diag(A)))
    eye = np.eye(k)
    for step in JITTER_STEPS:
        j = step * jitter_base
        try:
            L = np.linalg.cholesky(A + (j * level) * eye if j else A)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return CholeskyFactor(L, j)
    raise NonPositiveDefinite(
        f"matrix of size {k} is not positive definite after jitter {JITTER_STEPS[-1] * jitter_base:g}"
    )


@dataclass(frozen=True)
class LowRankConditional:
    """Conditional covariance ``diag(d) + U @ core @ U.T`` with ``core = root @ root.T``."""

    d: np.ndarray
    U: np.ndarray
    core: np.ndarray
    root: np.ndarray

    @property
    def dim(self) -> int:
        return self.d.shape[0]

    def to_dense(self) -> np.ndarray:
        return np.diag(self.d) + self.U @ self.core @ self.U.T


@dataclass(frozen=True)
class ConditionalParams:
    mean: np.ndarray
    cov: Dense | LowRankConditional
    jitter: float = 0.0
    chol: np.ndarray | None = None  # cached factor of a dense cov, if known

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


class DenseConditional:
    """Pattern-level factorization on the dense route; reusable across rows."""

    def __init__(self, S: np.ndarray, pattern: MissingnessPattern, jitter_base: float = 1e-10):
        o, m = pattern.obs_idx, pattern.mis_idx
        self.obs_idx, self.mis_idx = o, m
        self.jitter_base = jitter_base
        self.jitter = 0.0
        self.B = None
        self._chol = None
        if m.size == 0:
            self.cov = np.zeros((0, 0))
            return
        S_mm = S[np.ix_(m, m)]
        if o.size == 0:
            self.cov = S_mm.copy()
            return
        fac = cholesky_psd(S[np.ix_(o, o)], jitter_base)
        self.jitter = fac.jitter_applied
        S_om = S[np.ix_(o, m)]
        self.B = cho_solve((fac.L, True), S_om, check_finite=False)  # Sigma_oo^-1 Sigma_om
        cov = S_mm - S_om.T @ self.B
        self.cov = 0.5 * (cov + cov.T)

    def sampling_factor(self) -> np.ndarray:
        if self._chol is None:
            self._chol = cholesky_psd(self.cov, self.jitter_base).L
        return self._chol

    def params(self, mu: np.ndarray, y_obs: np.ndarray, with_factor: bool = False) -> ConditionalParams:
        m = self.mis_idx
        if m.size == 0:
            return ConditionalParams(np.zeros(0), Dense(self.cov))
        mean = mu[m].copy()
        if self.B is not None:
            mean += self.B.T @ (np.asarray(y_obs) - mu[self.obs_idx])
        chol = self.sampling_factor() if with_factor else None
        return ConditionalParams(mean, Dense(self.cov), self.jitter, chol)


def conditional_params_dense(
    mu: np.ndarray,
    S: np.ndarray,
    pattern: MissingnessPattern,
    y_obs: np.ndarray,
    jitter_base: float = 1e-10,
) -> ConditionalParams:
    return DenseConditional(S, pattern, jitter_base).params(mu, y_obs)


def structured_gram(d: np.ndarray, U: np.ndarray) -> np.ndarray:
    """``U^T diag(1/d) U``, reusable across rows of one iteration."""
    return U.T @ (U / d[:, None])


class StructuredConditional:
    """Pattern-level Woodbury factorization under ``Sigma = diag(d) + U U^T``.

    With ``K = I + U_o^T D_o^-1 U_o`` the conditional law of the missing block is

        mean_c = mu_m + U_m K^-1 U_o^T D_o^-1 (y_o - mu_o)
        cov_c  = diag(d_m) + U_m K^-1 U_m^T

    (the usual ``I - U_o^T Sigma_oo^-1 U_o`` collapses to ``K^-1``, which is
    positive definite by construction). Only k x k systems are solved.

    If ``gram`` (from :func:`structured_gram`) is given, the observed Gram block
    is obtained by subtracting the missing rows' contribution from it, so the
    cost scales with the number of missing cells rather than p.
    """

    def __init__(self, d: np.ndarray, U: np.ndarray, pattern: MissingnessPattern, gram: np.ndarray | None = None):
        o, m = pattern.obs_idx, pattern.mis_idx
        self.obs_idx, self.mis_idx = o, m
        k = U.shape[1]
        self.d_m, self.U_m = d[m], U[m]
        if m.size == 0 or o.size == 0:
            self.L = None
            self.root = self.core = np.eye(k)
            return
        U_o, d_o = U[o], d[o]
        if gram is not None and m.size < o.size:
            A = gram - self.U_m.T @ (self.U_m / self.d_m[:, None])
        else:
            A = U_o.T @ (U_o / d_o[:, None])
        K = A + np.eye(k)
        K = 0.5 * (K + K.T)
        self.L = cholesky_psd(K).L
        self.Ud_o = U_o / d_o[:, None]
        L_inv = solve_triangular(self.L, np.eye(k), lower=True, check_finite=False)
        self.root = L_inv.T
        self.core = self.root @ self.root.T

    def params(self, mu: np.ndarray, y_obs: np.ndarray) -> ConditionalParams:
        m = self.mis_idx
        if m.size == 0:
            return ConditionalParams(np.zeros(0), Dense(np.zeros((0, 0))))
        mean = mu[m].copy()
        if self.L is not None:
            w = self.Ud_o.T @ (np.asarray(y_obs) - mu[self.obs_idx])
            mean += self.U_m @ cho_solve((self.L, True), w, check_finite=False)
        return ConditionalParams(mean, LowRankConditional(self.d_m, self.U_m, self.core, self.root))


def conditional_params_structured(
    mu: np.ndarray,
    d: np.ndarray,
    U: np.ndarray,
    pattern: MissingnessPattern,
    y_obs: np.ndarray,
    gram: np.ndarray | None = None,
) -> ConditionalParams:
    """Conditional law of the missing block under ``diag(d) + U U^T``; see :class:`StructuredConditional`."""
    return StructuredConditional(d, U, pattern, gram).params(mu, y_obs)


def conditional_params(
    mu: np.ndarray,
    sigma: CovarianceRep,
    pattern: MissingnessPattern,
    y_obs: np.ndarray,
    jitter_base: float = 1e-10,
    gram: np.ndarray | None = None,
) -> ConditionalParams:
    """Dispatch on the covariance representation.

    For a :class:`DiagPlusLowRank` the scale is folded into (d, U) and ``gram``,
    if supplied, must be the Gram matrix of the folded factors.
    """
    if isinstance(sigma, Dense):
        return conditional_params_dense(mu, sigma.S, pattern, y_obs, jitter_base)
    d, U = sigma.folded()
    return conditional_params_structured(mu, d, U, pattern, y_obs, gram=gram)


def sample_conditional(cp: ConditionalParams, rng: np.random.Generator, jitter_base: float = 1e-10) -> np.ndarray:
    """One draw from N(mean_c, cov_c).

    Dense: ``mean + L eps``. Structured: ``mean + sqrt(d) * eps1 + U (root eps2)``
    with eps1 drawn before eps2.
    """
    if cp.dim == 0:
        return np.zeros(0)
    if isinstance(cp.cov, Dense):
        L = cp.chol if cp.chol is not None else cholesky_psd(cp.cov.S, jitter_base).L
        return cp.mean + L @ rng.standard_normal(cp.dim)
    c = cp.cov
    eps1 = rng.standard_normal(c.dim)
    eps2 = rng.standard_normal(c.root.shape[1])
    return cp.mean + np.sqrt(c.d) * eps1 + c.U @ (c.root @ eps2)


def sample_mean_posterior(
    ybar: np.ndarray,
    sigma: CovarianceRep,
    n: int,
    rng: np.random.Generator,
    jitter_base: float = 1e-10,
) -> np.ndarray:
    """One draw of mu from N(ybar, sigma / n)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if isinstance(sigma, Dense):
        L = cholesky_psd(sigma.S / n, jitter_base).L
        return ybar + L @ rng.standard_normal(len(ybar))
    d, U = sigma.folded()
    eps1 = rng.standard_normal(len(d))
    eps2 = rng.standard_normal(U.shape[1])
    return ybar + (np.sqrt(d) * eps1 + U @ eps2) / np.sqrt(n)


def sample_inverse_wishart(psi: np.ndarray, nu: float, rng: np.random.Generator) -> np.ndarray:
    """One draw from IW(psi, nu) via the Bartlett decomposition.

    With ``psi = L L^T`` and Bartlett factor A of W(I, nu), the draw is
    ``(L A^-T)(L A^-T)^T``.
    """
    p = psi.shape[0]
    if not nu > p - 1:
        raise ValueError(f"degrees of freedom {nu} must exceed p - 1 = {p - 1}")
    L = cholesky_psd(psi).L
    A = np.zeros((p, p))
    A[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(nu - np.arange(p)))
    T = solve_triangular(A, L.T, lower=True, check_finite=False)
    sigma = T.T @ T
    return 0.5 * (sigma + sigma.T)
