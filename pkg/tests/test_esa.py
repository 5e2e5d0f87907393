import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rank_r
from esabcv.esa import (
    EsaEstimator,
    SvdEstimator,
    esa_fit,
    esa_fit_path,
    esa_steps,
    init_sigma,
    log_likelihood,
)
from esabcv.exceptions import (
    DegenerateVarianceError,
    InvalidInputError,
    InvalidRankError,
    VarianceCollapseError,
)
from esabcv.matops import reconstruct, svd, truncate


def hetero(rng, N=30, n=60, r=3):
    sig = rng.uniform(0.3, 3.0, N)
    X = rank_r(rng, N, n, r, scale=1.5)
    return X + np.sqrt(sig)[:, None] * rng.standard_normal((N, n)), X, sig


def test_init_sigma_hand_value():
    Y = np.array([[1.0, -1.0, 1.0, -1.0], [0.0, 1.0, 2.0, 3.0]])
    s = init_sigma(Y)
    assert s[0] == 1.0
    assert s[1] == pytest.approx(1.25)


def test_init_sigma_constant_row():
    Y = np.array([[2.0, 2.0, 2.0], [0.0, 1.0, 2.0]])
    with pytest.raises(DegenerateVarianceError) as info:
        init_sigma(Y)
    assert info.value.row == 0


def test_init_sigma_chi_square_band(rng):
    # (n/sigma^2) s2 ~ chi2(n-1); its .005/.995 quantiles for n=40 bound 4 s2/... in (2.6, 5.8)
    Y = 2.0 * rng.standard_normal((5, 40))
    s = init_sigma(Y)
    assert np.all((s > 2.6) & (s < 5.8))


def test_k_zero(rng):
    Y = rng.standard_normal((6, 10))
    fit = esa_fit(Y, 0)
    np.testing.assert_array_equal(fit.Xhat, 0)
    np.testing.assert_allclose(fit.Sigmahat, np.mean(Y**2, axis=1))


def test_noiseless_recovery(rng):
    X = rank_r(rng, 40, 60, 3)
    Y = X + 1e-6 * rng.standard_normal(X.shape)
    fit = esa_fit(Y, 3, 3)
    assert np.linalg.norm(fit.Xhat - X) / np.linalg.norm(X) <= 1e-3


def test_m1_is_whitened_truncated_svd(rng):
    Y, _, _ = hetero(rng)
    s0 = init_sigma(Y)
    w = np.sqrt(s0)[:, None]
    expect = w * reconstruct(truncate(svd(Y / w), 4))
    np.testing.assert_allclose(esa_fit(Y, 4, 1).Xhat, expect, atol=1e-10)


def test_manual_alternation(rng):
    Y, _, _ = hetero(rng)
    s = init_sigma(Y)
    for _ in range(3):
        w = np.sqrt(s)[:, None]
        X = w * reconstruct(truncate(svd(Y / w), 3))
        s = np.mean((Y - X) ** 2, axis=1)
    fit = esa_fit(Y, 3)
    np.testing.assert_allclose(fit.Xhat, X, atol=1e-9)
    np.testing.assert_allclose(fit.Sigmahat, s, rtol=1e-9)
    assert fit.m == 3 and fit.k == 3


def test_likelihood_nondecreasing(rng):
    Y, _, _ = hetero(rng)
    prev = -math.inf
    for st_ in esa_steps(Y, 3, 10):
        # X-step is optimal for the current variances, S-step for the current X
        after_x = log_likelihood(Y, st_.Xhat, st_.sigma_used)
        after_s = log_likelihood(Y, st_.Xhat, st_.sigma_new)
        assert after_x >= prev - 1e-8 * abs(after_x)
        assert after_s >= after_x - 1e-8 * abs(after_x)
        prev = after_s


def test_rank_bound(rng):
    Y, _, _ = hetero(rng)
    d = np.linalg.svd(esa_fit(Y, 2).Xhat, compute_uv=False)
    assert d[2] <= 1e-10 * d[0]


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 2**32 - 1))
def test_scale_equivariance(c, seed):
    Y, _, _ = hetero(np.random.default_rng(seed), N=12, n=20, r=2)
    a = esa_fit(c * Y, 2).Xhat
    b = c * esa_fit(Y, 2).Xhat
    np.testing.assert_allclose(a, b, atol=1e-9 * np.abs(b).max())


def test_factors_multiply_to_xhat(rng):
    Y, _, _ = hetero(rng)
    fit = esa_fit(Y, 3)
    np.testing.assert_allclose(fit.left @ fit.right, fit.Xhat, atol=1e-10)
    with pytest.raises(ValueError):
        fit.Xhat[0, 0] = 1.0


def test_path_matches_individual_fits(rng):
    Y, _, _ = hetero(rng, N=25, n=15)
    for k, fit in esa_fit_path(Y, [0, 1, 3, 5], 3):
        np.testing.assert_allclose(fit.Xhat, esa_fit(Y, k).Xhat, atol=1e-9)


def test_variance_collapse():
    # orthogonal rows give a diagonal Gram matrix, so the rank-1 fit
    # reproduces row 0 exactly and its residual variance is exactly zero
    Y = np.array([[10.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 0.5, 0]])
    with pytest.raises(VarianceCollapseError) as info:
        list(esa_steps(Y, 1, 3, sigma0=np.ones(3)))
    assert (info.value.step, info.value.row) == (1, 0)


@pytest.mark.parametrize("k", [-1, 6, 1.5])
def test_bad_rank(k):
    with pytest.raises(InvalidRankError):
        esa_fit(np.random.default_rng(1).standard_normal((6, 9)), k)


def test_bad_steps():
    with pytest.raises(InvalidInputError):
        esa_fit(np.random.default_rng(1).standard_normal((6, 9)), 1, 0)


def test_log_likelihood_trivial():
    assert log_likelihood([[0.3]], [[0.3]], [1.0]) == pytest.approx(-0.5 * math.log(2 * math.pi))
    Y = np.ones((3, 4))
    assert log_likelihood(Y, Y, np.ones(3)) == pytest.approx(-6 * math.log(2 * math.pi))


def test_log_likelihood_density_oracle(rng):
    Y, X, s = rng.standard_normal((3, 5)), rng.standard_normal((3, 5)), rng.uniform(0.5, 2, 3)
    dens = 0.0
    for i in range(3):
        for j in range(5):
            z = Y[i, j] - X[i, j]
            dens += math.log(math.exp(-z * z / (2 * s[i])) / math.sqrt(2 * math.pi * s[i]))
    assert log_likelihood(Y, X, s) == pytest.approx(dens, abs=1e-10)


def test_log_likelihood_rejects_bad_variance():
    with pytest.raises(InvalidInputError):
        log_likelihood(np.ones((2, 2)), np.ones((2, 2)), [1.0, 0.0])


def test_estimators(rng):
    Y, _, _ = hetero(rng)
    assert EsaEstimator(2)(Y, 3).m == 2
    fit = SvdEstimator()(Y, 3)
    np.testing.assert_allclose(fit.Xhat, reconstruct(truncate(svd(Y), 3)), atol=1e-10)
    assert np.ptp(fit.Sigmahat) == 0
    for k, f in SvdEstimator().path(Y, [1, 2]):
        np.testing.assert_allclose(f.Xhat, reconstruct(truncate(svd(Y), k)), atol=1e-10)
