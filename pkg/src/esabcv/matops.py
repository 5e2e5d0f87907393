"""Dense linear-algebra kernel.

Everything here is a pure function of its inputs. Random draws always come
from an explicitly passed :class:`numpy.random.Generator`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import DegenerateFactorizationError, InvalidInputError, InvalidRankError

RANK_RTOL = 1e-12
GRAM_RCOND = 1e-10


def as_data_matrix(Y, name="Y", min_dim=2):
    """Validate ``Y`` as an ``N x n`` data matrix and return it as float array.

    Rows are variables, columns are observations. All entries must be finite
    and both dimensions at least ``min_dim``.
    """
    A = np.asarray(Y, dtype=float)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D matrix, got ndim={A.ndim}")
    if A.shape[0] < min_dim or A.shape[1] < min_dim:
        raise InvalidInputError(f"{name} must be at least {min_dim}x{min_dim}, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


@dataclass(frozen=True)
class TruncatedSvd:
    """Singular triples ``A ~ U diag(d) V^T`` with ``d`` nonincreasing."""

    U: np.ndarray
    d: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.d)

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.d) @ self.V.T


@dataclass(frozen=True)
class SampleSpectrum:
    """Singular values of ``Y`` divided by ``sqrt(n)``.

    ``lambdas**2`` are the nonzero eigenvalues of ``Y Y^T / n``.
    """

    lambdas: np.ndarray
    N: int
    n: int

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.lambdas**2

    def scaled(self, c: float) -> "SampleSpectrum":
        return SampleSpectrum(self.lambdas * c, self.N, self.n)


def _fix_signs(U, V):
    # largest-magnitude entry of each left vector made positive
    if U.shape[1] == 0:
        return U, V
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def svd(A) -> TruncatedSvd:
    """Full thin SVD with deterministic column signs."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InvalidInputError("svd expects a 2-D matrix")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("svd input contains non-finite entries")
    U, d, Vt = np.linalg.svd(A, full_matrices=False)
    # LAPACK already sorts; a stable sort keeps input order on ties
    order = np.argsort(-d, kind="stable")
    U, d, V = U[:, order], d[order], Vt[order].T
    U, V = _fix_signs(U, V)
    return TruncatedSvd(U, d, V)


def truncate(s: TruncatedSvd, k: int) -> TruncatedSvd:
    """Keep the ``k`` largest singular triples."""
    if not 0 <= k <= s.rank:
        raise InvalidRankError(f"k={k} outside [0, {s.rank}]")
    return TruncatedSvd(s.U[:, :k], s.d[:k], s.V[:, :k])


def reconstruct(s: TruncatedSvd) -> np.ndarray:
    return s.reconstruct()


def sample_spectrum(Y) -> SampleSpectrum:
    Y = as_data_matrix(Y)
    N, n = Y.shape
    d = np.linalg.svd(Y, compute_uv=False)
    return SampleSpectrum(np.sort(d)[::-1] / np.sqrt(n), N, n)


def top_subspace(A, k):
    """Orthonormal basis for the top-``k`` singular subspace of the short side.

    Returns ``(Q, side)``. When ``side == "left"``, ``Q`` is ``N x k`` and the
    rank-``k`` truncation is ``Q @ (Q.T @ A)``; when ``side == "right"``, ``Q``
    is ``n x k`` and the truncation is ``(A @ Q) @ Q.T``. Columns are ordered
    by decreasing singular value.

    Uses a partial symmetric eigensolve of the Gram matrix on the shorter
    side, which is several times cheaper than a full SVD when only a few
    leading triples are needed. Forming the Gram matrix squares the condition
    number, so when the ``k``-th eigenvalue is below ``GRAM_RCOND`` times the
    largest the basis is taken from a full SVD instead.
    """
    A = np.asarray(A, dtype=float)
    N, n = A.shape
    p = min(N, n)
    if not 0 <= k <= p:
        raise InvalidRankError(f"k={k} outside [0, {p}]")
    side = "left" if N <= n else "right"
    if k == 0:
        return np.zeros((N if side == "left" else n, 0)), side
    if k == p:
        return np.eye(p), side
    scale = np.max(np.abs(A))
    if scale == 0 or not np.isfinite(scale):
        scale = 1.0
    B = A / scale
    G = B @ B.T if side == "left" else B.T @ B
    w, Q = scipy.linalg.eigh(G, subset_by_index=[p - k, p - 1], driver="evr")
    if not w[0] > GRAM_RCOND * w[-1]:
        U, _, Vt = np.linalg.svd(B, full_matrices=False)
        return np.ascontiguousarray(U[:, :k] if side == "left" else Vt[:k].T), side
    return np.ascontiguousarray(Q[:, ::-1]), side


def low_rank_factors(A, k):
    """Rank-``k`` truncation of ``A`` returned as factors ``(L, R)``, ``A_k = L @ R``."""
    Q, side = top_subspace(A, k)
    if side == "left":
        return Q, Q.T @ A
    return A @ Q, Q.T


def _is_full_rank(M, r):
    if r == 0:
        return True
    s = np.linalg.svd(M, compute_uv=False)
    return len(s) >= r and s[0] > 0 and s[r - 1] > RANK_RTOL * s[0]


def pinv_factored(L, R) -> np.ndarray:
    """Moore-Penrose inverse of ``L @ R`` from its full-rank factors.

    ``(LR)^+ = R^T (R R^T)^{-1} (L^T L)^{-1} L^T`` holds whenever ``L`` is
    ``N x r`` and ``R`` is ``r x n``, both of rank ``r``.
    """
    L = np.asarray(L, dtype=float)
    R = np.asarray(R, dtype=float)
    if L.ndim != 2 or R.ndim != 2 or L.shape[1] != R.shape[0]:
        raise InvalidInputError(f"incompatible factor shapes {L.shape} and {R.shape}")
    r = L.shape[1]
    if r == 0:
        return np.zeros((R.shape[1], L.shape[0]))
    if not (_is_full_rank(L, r) and _is_full_rank(R, r)):
        raise DegenerateFactorizationError(f"factors are not both of rank {r}")
    right = np.linalg.solve(R @ R.T, R).T  # R^T (R R^T)^{-1}
    left = np.linalg.solve(L.T @ L, L.T)  # (L^T L)^{-1} L^T
    return right @ left


def stiefel_uniform(rng: np.random.Generator, N: int, k: int) -> np.ndarray:
    """Draw an ``N x k`` matrix uniformly from the Stiefel manifold.

    QR of a standard Gaussian matrix, with columns flipped so the diagonal of
    the triangular factor is positive (this makes the law Haar).
    """
    if k < 0 or k > N:
        raise InvalidRankError(f"cannot draw {k} orthonormal columns in dimension {N}")
    if k == 0:
        return np.zeros((N, 0))
    Z = rng.standard_normal((N, k))
    Q, Rf = np.linalg.qr(Z)
    signs = np.sign(np.diag(Rf))
    signs[signs == 0] = 1.0
    return Q * signs
