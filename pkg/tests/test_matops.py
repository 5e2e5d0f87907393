import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esabcv.exceptions import DegenerateFactorizationError, InvalidInputError, InvalidRankError
from esabcv.matops import (
    as_data_matrix,
    low_rank_factors,
    pinv_factored,
    reconstruct,
    sample_spectrum,
    stiefel_uniform,
    svd,
    top_subspace,
    truncate,
)


def test_svd_diagonal():
    s = svd(np.diag([3.0, 2.0, 1.0]))
    np.testing.assert_allclose(s.d, [3, 2, 1])
    np.testing.assert_allclose(np.abs(s.U), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(np.abs(s.V), np.eye(3), atol=1e-12)


def test_svd_zero_matrix():
    s = svd(np.zeros((4, 3)))
    np.testing.assert_array_equal(s.d, np.zeros(3))


def test_svd_reconstructs(rng):
    A = rng.standard_normal((6, 4))
    s = svd(A)
    assert np.linalg.norm(A - s.reconstruct()) <= 1e-10 * np.linalg.norm(A)
    assert np.all(np.diff(s.d) <= 0)
    np.testing.assert_allclose(s.U.T @ s.U, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(s.V.T @ s.V, np.eye(4), atol=1e-10)


def test_svd_sign_convention(rng):
    A = rng.standard_normal((7, 5))
    s = svd(A)
    idx = np.argmax(np.abs(s.U), axis=0)
    assert np.all(s.U[idx, np.arange(5)] > 0)
    flipped = svd(-A)
    np.testing.assert_allclose(flipped.U, s.U, atol=1e-10)
    np.testing.assert_allclose(flipped.V, -s.V, atol=1e-10)


def test_svd_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_truncate_diag():
    s = truncate(svd(np.diag([3.0, 2.0, 1.0])), 2)
    np.testing.assert_allclose(reconstruct(s), np.diag([3.0, 2.0, 0.0]), atol=1e-12)


def test_truncate_zero_rank(rng):
    A = rng.standard_normal((5, 3))
    np.testing.assert_array_equal(reconstruct(truncate(svd(A), 0)), np.zeros((5, 3)))


def test_truncate_eckart_young(rng):
    A = rng.standard_normal((6, 4))
    d = np.linalg.svd(A, compute_uv=False)
    err = np.linalg.norm(A - reconstruct(truncate(svd(A), 2))) ** 2
    assert err == pytest.approx(d[2] ** 2 + d[3] ** 2, rel=1e-10)


@pytest.mark.parametrize("k", [-1, 5])
def test_truncate_out_of_range(rng, k):
    with pytest.raises(InvalidRankError):
        truncate(svd(rng.standard_normal((5, 4))), k)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2**32 - 1))
def test_truncation_error_nonincreasing(N, n, seed):
    A = np.random.default_rng(seed).standard_normal((N, n))
    s = svd(A)
    errs = [np.linalg.norm(A - reconstruct(truncate(s, k))) for k in range(min(N, n) + 1)]
    assert np.all(np.diff(errs) <= 1e-12)


def test_pinv_rank_one_ones():
    P = pinv_factored(np.ones((2, 1)), np.ones((1, 2)))
    np.testing.assert_allclose(P, np.full((2, 2), 0.25), atol=1e-15)


def test_pinv_diagonal():
    P = pinv_factored(np.eye(2), np.diag([2.0, 4.0]))
    np.testing.assert_allclose(P, np.diag([0.5, 0.25]), atol=1e-15)


def test_pinv_matches_svd_oracle(rng):
    L, R = rng.standard_normal((8, 3)), rng.standard_normal((3, 5))
    np.testing.assert_allclose(pinv_factored(L, R), np.linalg.pinv(L @ R), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_penrose_identity(r, seed):
    g = np.random.default_rng(seed)
    L, R = g.standard_normal((r + 3, r)), g.standard_normal((r, r + 2))
    P = pinv_factored(L, R)
    np.testing.assert_allclose(P @ (L @ R) @ P, P, atol=1e-9 * max(1.0, np.abs(P).max()))


def test_pinv_rank_deficient():
    L = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(DegenerateFactorizationError):
        pinv_factored(L, np.eye(2))
    with pytest.raises(DegenerateFactorizationError):
        pinv_factored(np.eye(2), np.zeros((2, 3)))


def test_stiefel_square_orthogonal(rng):
    Q = stiefel_uniform(rng, 3, 3)
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-10)


def test_stiefel_reproducible():
    a = stiefel_uniform(np.random.default_rng(5), 5, 2)
    b = stiefel_uniform(np.random.default_rng(5), 5, 2)
    np.testing.assert_array_equal(a, b)


def test_stiefel_symmetry(rng):
    first = np.array([stiefel_uniform(rng, 50, 1)[0, 0] for _ in range(2000)])
    assert abs(first.mean()) < 4 / np.sqrt(2000)


def test_stiefel_too_many_columns(rng):
    with pytest.raises(InvalidRankError):
        stiefel_uniform(rng, 3, 4)


def test_stiefel_is_qr_with_positive_diagonal():
    Z = np.random.default_rng(11).standard_normal((6, 3))
    Q = stiefel_uniform(np.random.default_rng(11), 6, 3)
    R = Q.T @ Z
    assert np.all(np.diag(R) > 0)
    np.testing.assert_allclose(np.tril(R, -1), 0, atol=1e-12)


def test_sample_spectrum_energy(rng):
    Y = rng.standard_normal((7, 12))
    spec = sample_spectrum(Y)
    assert np.all(np.diff(spec.lambdas) <= 0)
    assert 12 * np.sum(spec.eigenvalues) == pytest.approx(np.sum(Y**2), rel=1e-8)


@pytest.mark.parametrize("shape", [(6, 9), (9, 6), (5, 5)])
@pytest.mark.parametrize("k", [0, 1, 3, 5])
def test_top_subspace_matches_full_svd(rng, shape, k):
    A = rng.standard_normal(shape)
    L, R = low_rank_factors(A, k)
    np.testing.assert_allclose(L @ R, reconstruct(truncate(svd(A), k)), atol=1e-10)


def test_top_subspace_ordering(rng):
    A = rng.standard_normal((5, 30))
    Q, side = top_subspace(A, 3)
    assert side == "left"
    norms = np.linalg.norm(Q.T @ A, axis=1)
    assert np.all(np.diff(norms) < 0)


def test_as_data_matrix_checks():
    with pytest.raises(InvalidInputError):
        as_data_matrix(np.ones(4))
    with pytest.raises(InvalidInputError):
        as_data_matrix(np.ones((1, 4)))
    with pytest.raises(InvalidInputError):
        as_data_matrix([[1.0, np.inf], [0.0, 1.0]])
