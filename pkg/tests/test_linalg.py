import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hima.linalg import (
    StructuredConditional,
    cholesky_psd,
    conditional_params,
    conditional_params_dense,
    sample_conditional,
    sample_inverse_wishart,
    sample_mean_posterior,
    structured_gram,
)
from hima.types import Dense, DiagPlusLowRank, MissingnessPattern, NonPositiveDefinite


def precision_conditional(mu, S, obs, mis, y_obs):
    """Independent oracle: conditional law read off the precision matrix."""
    Q = np.linalg.inv(S)
    Q_mm = Q[np.ix_(mis, mis)]
    cov = np.linalg.inv(Q_mm)
    mean = mu[mis] - cov @ Q[np.ix_(mis, obs)] @ (y_obs - mu[obs])
    return mean, cov


def dense_cov(cp):
    c = cp.cov
    return c.S if isinstance(c, Dense) else c.to_dense()


def random_pattern(rng, p):
    mask = rng.random(p) < 0.6
    mask[rng.integers(p)] = True
    if mask.all():
        mask[rng.integers(p)] = False
    return MissingnessPattern.from_mask_row(mask)


def test_dense_worked_example():
    S = np.array([[2.0, 1, 0], [1, 2, 1], [0, 1, 2]])
    pat = MissingnessPattern.from_mask_row([True, False, True])
    cp = conditional_params_dense(np.zeros(3), S, pat, np.array([1.0, 1.0]))
    np.testing.assert_allclose(cp.mean, [1.0], atol=1e-12)
    np.testing.assert_allclose(cp.cov.S, [[1.0]], atol=1e-12)


def test_structured_worked_example():
    sigma = DiagPlusLowRank(np.ones(2), np.ones((2, 1)))
    pat = MissingnessPattern.from_mask_row([True, False])
    cp = conditional_params(np.zeros(2), sigma, pat, np.array([2.0]))
    np.testing.assert_allclose(cp.mean, [1.0], atol=1e-12)
    np.testing.assert_allclose(dense_cov(cp), [[1.5]], atol=1e-12)


def test_empty_missing_and_empty_observed():
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    mu = np.array([3.0, -1.0])
    none_missing = MissingnessPattern.from_mask_row([True, True])
    assert conditional_params_dense(mu, S, none_missing, mu).dim == 0
    all_missing = MissingnessPattern.from_mask_row([False, False])
    cp = conditional_params_dense(mu, S, all_missing, np.zeros(0))
    np.testing.assert_array_equal(cp.mean, mu)
    np.testing.assert_array_equal(cp.cov.S, S)
    d, U = np.array([1.0, 2.0]), np.array([[1.0], [0.5]])
    cp = conditional_params(mu, DiagPlusLowRank(d, U), all_missing, np.zeros(0))
    np.testing.assert_allclose(dense_cov(cp), np.diag(d) + U @ U.T)


def test_dense_matches_precision_oracle():
    rng = np.random.default_rng(3)
    for _ in range(30):
        p = int(rng.integers(2, 12))
        A = rng.normal(size=(p, p))
        S = A @ A.T + 0.5 * np.eye(p)
        mu = rng.normal(size=p)
        pat = random_pattern(rng, p)
        y = rng.normal(size=pat.obs_idx.size)
        cp = conditional_params_dense(mu, S, pat, y)
        mean, cov = precision_conditional(mu, S, pat.obs_idx, pat.mis_idx, y)
        np.testing.assert_allclose(cp.mean, mean, rtol=1e-8, atol=1e-9)
        np.testing.assert_allclose(cp.cov.S, cov, rtol=1e-8, atol=1e-9)


def test_paths_agree_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = int(rng.integers(2, 201))
        k = int(rng.integers(1, 30))
        d = rng.uniform(0.1, 3.0, p)
        U = rng.normal(size=(p, k))
        scale = rng.uniform(0.05, 2.0)
        sigma = DiagPlusLowRank(d, U, scale)
        mu = rng.normal(size=p)
        pat = random_pattern(rng, p)
        y = rng.normal(size=pat.obs_idx.size)
        fd, fU = sigma.folded()
        cs = conditional_params(mu, sigma, pat, y, gram=structured_gram(fd, fU))
        cd = conditional_params(mu, Dense(sigma.to_dense()), pat, y)
        np.testing.assert_allclose(cs.mean, cd.mean, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(dense_cov(cs), cd.cov.S, rtol=1e-8, atol=1e-8)


def test_gram_shortcut_matches_direct():
    rng = np.random.default_rng(5)
    d, U = rng.uniform(0.5, 2, 40), rng.normal(size=(40, 6))
    pat = MissingnessPattern.from_mask_row(np.arange(40) % 7 != 0)
    y = rng.normal(size=pat.obs_idx.size)
    a = StructuredConditional(d, U, pat, structured_gram(d, U)).params(np.zeros(40), y)
    b = StructuredConditional(d, U, pat).params(np.zeros(40), y)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-10)
    np.testing.assert_allclose(a.cov.core, b.cov.core, rtol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 15), st.integers(1, 5))
def test_conditioning_shrinks_variance(seed, p, k):
    rng = np.random.default_rng(seed)
    d, U = rng.uniform(0.1, 2.0, p), rng.normal(size=(p, k))
    sigma = DiagPlusLowRank(d, U)
    pat = random_pattern(rng, p)
    cp = conditional_params(np.zeros(p), sigma, pat, rng.normal(size=pat.obs_idx.size))
    cov = dense_cov(cp)
    assert np.linalg.eigvalsh(cov).min() > -1e-10
    S_mm = sigma.to_dense()[np.ix_(pat.mis_idx, pat.mis_idx)]
    assert np.linalg.eigvalsh(S_mm - cov).min() > -1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_diagonal_covariance_ignores_observed(seed, p):
    rng = np.random.default_rng(seed)
    S = np.diag(rng.uniform(0.1, 5.0, p))
    mu = rng.normal(size=p)
    pat = random_pattern(rng, p)
    cp = conditional_params_dense(mu, S, pat, rng.normal(size=pat.obs_idx.size) * 100)
    np.testing.assert_allclose(cp.mean, mu[pat.mis_idx], atol=1e-12)
    np.testing.assert_allclose(cp.cov.S, S[np.ix_(pat.mis_idx, pat.mis_idx)], atol=1e-12)


def test_cholesky_examples():
    with pytest.raises(NonPositiveDefinite):
        cholesky_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))
    f = cholesky_psd(np.array([[4.0, 2.0], [2.0, 1.0000000001]]))
    assert f.jitter_applied == 0.0
    f = cholesky_psd(np.zeros((3, 3)))
    np.testing.assert_array_equal(f.L, np.zeros((3, 3)))


def test_cholesky_uses_jitter_for_singular_psd():
    v = np.array([[1.0], [2.0], [3.0]])
    f = cholesky_psd(v @ v.T)
    assert f.jitter_applied > 0
    np.testing.assert_allclose(f.L @ f.L.T, v @ v.T, atol=1e-6)


def test_sampling_moments_scalar():
    S = np.array([[2.0, 1, 0], [1, 2, 1], [0, 1, 2]])
    pat = MissingnessPattern.from_mask_row([True, False, True])
    cp = conditional_params_dense(np.zeros(3), S, pat, np.array([1.0, 1.0]))
    rng = np.random.default_rng(0)
    draws = np.array([sample_conditional(cp, rng)[0] for _ in range(100_000)])
    assert abs(draws.mean() - 1.0) < 0.02
    assert abs(draws.var() - 1.0) < 0.05


def test_sample_covariance_converges():
    S = np.array([[2.0, 0.8, 0.3], [0.8, 1.5, 0.2], [0.3, 0.2, 1.0]])
    pat = MissingnessPattern.from_mask_row([False, False, True])
    cp = conditional_params_dense(np.zeros(3), S, pat, np.array([0.5]))
    rng = np.random.default_rng(2)

    def err(N):
        x = np.array([sample_conditional(cp, rng) for _ in range(N)])
        return np.abs(np.cov(x.T) - cp.cov.S).max()

    assert err(100_000) < err(10_000)


def test_structured_and_dense_draws_same_law():
    rng = np.random.default_rng(8)
    p = 8
    d, U = rng.uniform(0.5, 1.5, p), rng.normal(size=(p, 3))
    sigma = DiagPlusLowRank(d, U)
    pat = MissingnessPattern.from_mask_row([True, False, True, False, True, True, False, True])
    y = rng.normal(size=5)
    cs = conditional_params(np.zeros(p), sigma, pat, y)
    cd = conditional_params(np.zeros(p), Dense(sigma.to_dense()), pat, y)
    a = np.array([sample_conditional(cs, rng) for _ in range(10_000)])
    b = np.array([sample_conditional(cd, rng) for _ in range(10_000)])
    # three simultaneous tests: Bonferroni-adjusted level
    for j in range(3):
        assert stats.ks_2samp(a[:, j], b[:, j]).pvalue > 0.01 / 3


def test_mean_posterior_variance():
    rng = np.random.default_rng(4)
    for sigma in (Dense(np.eye(3)), DiagPlusLowRank(np.ones(3), np.zeros((3, 1)))):
        draws = np.array([sample_mean_posterior(np.zeros(3), sigma, 4, rng) for _ in range(100_000)])
        np.testing.assert_allclose(draws.var(axis=0), 0.25, atol=0.01)


def test_inverse_wishart_mean():
    rng = np.random.default_rng(6)
    p, nu = 3, 10.0
    A = rng.normal(size=(p, p))
    psi = A @ A.T + np.eye(p)
    draws = np.array([sample_inverse_wishart(psi, nu, rng) for _ in range(40_000)])
    expected = psi / (nu - p - 1)
    assert np.abs(draws.mean(axis=0) - expected).max() / np.abs(expected).max() < 0.02


def test_inverse_wishart_univariate_is_inverse_gamma():
    rng = np.random.default_rng(7)
    psi, nu = 2.5, 7.0
    draws = np.array([sample_inverse_wishart(np.array([[psi]]), nu, rng)[0, 0] for _ in range(20_000)])
    assert stats.kstest(draws, stats.invgamma(a=nu / 2, scale=psi / 2).cdf).pvalue > 0.01


def test_inverse_wishart_matches_reference_sampler():
    rng = np.random.default_rng(9)
    psi = np.array([[2.0, 0.5], [0.5, 1.0]])
    nu = 6.0
    ours = np.array([sample_inverse_wishart(psi, nu, rng) for _ in range(20_000)])
    ref = stats.invwishart(df=nu, scale=psi).rvs(size=20_000, random_state=10)
    for i, j in [(0, 0), (0, 1), (1, 1)]:
        assert stats.ks_2samp(ours[:, i, j], ref[:, i, j]).pvalue > 0.01 / 3
