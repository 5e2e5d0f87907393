"""Early-stopping alternation (ESA) for a low-rank signal in heteroscedastic noise.

Given a target rank ``k``, ESA alternates

* a whitened truncated SVD: ``Xhat = S^{1/2} [S^{-1/2} Y]_k``
* a residual variance update: ``S = diag((Y - Xhat)(Y - Xhat)^T) / n``

starting from the per-row sample variances, and stops after ``m`` rounds.
Iterating to convergence is deliberately avoided because the Gaussian
likelihood is unbounded as any single variance goes to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .exceptions import (
    DegenerateVarianceError,
    InvalidInputError,
    InvalidRankError,
    VarianceCollapseError,
)
from .matops import as_data_matrix, top_subspace

DEFAULT_STEPS = 3
COLLAPSE_FLOOR = 1e-300


def _readonly(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FactorFit:
    """Result of a rank-``k`` fit.

    ``left @ right`` equals ``Xhat``; the factors have ``k`` columns / rows and
    are whatever the estimator found convenient (they are not unique).
    ``Sigmahat`` holds one noise variance per row.
    """

    Xhat: np.ndarray
    Sigmahat: np.ndarray
    k: int
    m: int
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("Xhat", "Sigmahat", "left", "right"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))


def init_sigma(Y) -> np.ndarray:
    """Per-row sample variances (``1/n`` normalisation)."""
    Y = as_data_matrix(Y)
    centered = Y - Y.mean(axis=1, keepdims=True)
    s2 = np.mean(centered**2, axis=1)
    bad = np.flatnonzero((np.ptp(Y, axis=1) == 0) | ~(s2 > 0))
    if bad.size:
        raise DegenerateVarianceError(f"row {bad[0]} is constant", row=int(bad[0]))
    return s2


def _check_rank(Y, k):
    p = min(Y.shape)
    if not (isinstance(k, (int, np.integer)) and 0 <= k < p):
        raise InvalidRankError(f"k must be an integer in [0, {p}), got {k!r}")
    return int(k)


def _whitened_step(Y, sigma2, Q, side, k):
    # Q spans the top singular subspace of S^{-1/2} Y; return rank-k factors of Xhat
    w = 1.0 / np.sqrt(sigma2)
    Yt = w[:, None] * Y
    Qk = Q[:, :k]
    if side == "left":
        left = Qk / w[:, None]
        right = Qk.T @ Yt
    else:
        left = (Yt @ Qk) / w[:, None]
        right = Qk.T
    return left, right


def _residual_variance(Y, Xhat, step):
    s2 = np.mean((Y - Xhat) ** 2, axis=1)
    i = int(np.argmin(s2))
    if not s2[i] > COLLAPSE_FLOOR:
        raise VarianceCollapseError(step, i, float(s2[i]))
    return s2


@dataclass(frozen=True)
class EsaStep:
    """One round of alternation: ``Xhat`` was fitted using ``sigma_used``."""

    step: int
    Xhat: np.ndarray
    sigma_used: np.ndarray
    sigma_new: np.ndarray
    left: np.ndarray
    right: np.ndarray


def esa_steps(Y, k: int, m: int, sigma0=None) -> Iterator[EsaStep]:
    """Yield every alternation round up to ``m``.

    Raises :class:`VarianceCollapseError` at the round where a residual
    variance drops to ``1e-300`` or below; rounds already yielded are valid.
    """
    Y = as_data_matrix(Y)
    k = _check_rank(Y, k)
    if m < 1:
        raise InvalidInputError("m must be at least 1")
    sigma2 = init_sigma(Y) if sigma0 is None else np.asarray(sigma0, dtype=float)
    for step in range(1, m + 1):
        Q, side = top_subspace(Y / np.sqrt(sigma2)[:, None], k)
        left, right = _whitened_step(Y, sigma2, Q, side, k)
        Xhat = left @ right
        new = _residual_variance(Y, Xhat, step)
        yield EsaStep(step, Xhat, sigma2, new, left, right)
        sigma2 = new


def esa_fit(Y, k: int, m: int = DEFAULT_STEPS) -> FactorFit:
    """Fit a rank-``k`` signal with ``m`` rounds of early-stopping alternation."""
    last = None
    for last in esa_steps(Y, k, m):
        pass
    return FactorFit(last.Xhat, last.sigma_new, int(k), m, last.left, last.right)


def esa_fit_path(Y, ks: Iterable[int], m: int = DEFAULT_STEPS) -> Iterator[tuple[int, FactorFit]]:
    """Fit ESA for several ranks, lazily, sharing the first whitened SVD.

    The first round whitens with the sample variances for every ``k``, so one
    top-``max(ks)`` subspace serves all of them. Later rounds are per-rank.
    Yields ``(k, fit)`` in the order of ``ks``; a collapse at some ``k``
    propagates as :class:`VarianceCollapseError` from that point of the
    iteration, leaving the caller free to stop or skip.
    """
    Y = as_data_matrix(Y)
    ks = [_check_rank(Y, k) for k in ks]
    if m < 1:
        raise InvalidInputError("m must be at least 1")
    if not ks:
        return
    sigma0 = init_sigma(Y)
    Q0, side = top_subspace(Y / np.sqrt(sigma0)[:, None], max(ks))
    for k in ks:
        left, right = _whitened_step(Y, sigma0, Q0, side, k)
        Xhat = left @ right
        sigma2 = _residual_variance(Y, Xhat, 1)
        for step in range(2, m + 1):
            Q, side_k = top_subspace(Y / np.sqrt(sigma2)[:, None], k)
            left, right = _whitened_step(Y, sigma2, Q, side_k, k)
            Xhat = left @ right
            sigma2 = _residual_variance(Y, Xhat, step)
        yield k, FactorFit(Xhat, sigma2, k, m, left, right)


def log_likelihood(Y, X, Sigma) -> float:
    """Gaussian log-likelihood of ``Y = X + S^{1/2} E`` with diagonal ``S``."""
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    s2 = np.asarray(Sigma, dtype=float).ravel()
    if Y.ndim != 2 or Y.shape != X.shape or s2.shape != (Y.shape[0],):
        raise InvalidInputError("dimensions of Y, X and Sigma do not agree")
    if not np.all(s2 > 0):
        raise InvalidInputError("variances must be positive")
    N, n = Y.shape
    rss = np.sum((Y - X) ** 2, axis=1)
    return float(
        -0.5 * N * n * np.log(2 * np.pi) - 0.5 * n * np.sum(np.log(s2)) - 0.5 * np.sum(rss / s2)
    )


class EsaEstimator:
    """Callable fit procedure ``(Y, k) -> FactorFit`` for ESA with ``m`` steps."""

    name = "esa"

    def __init__(self, m: int = DEFAULT_STEPS):
        self.m = m

    def __call__(self, Y, k):
        return esa_fit(Y, k, self.m)

    def path(self, Y, ks):
        return esa_fit_path(Y, ks, self.m)

    def __repr__(self):
        return f"EsaEstimator(m={self.m})"


class SvdEstimator:
    """Plain truncated SVD of ``Y``, treating the noise as homoscedastic.

    ``Sigmahat`` is the pooled residual variance repeated on every row, which
    is what the homoscedastic model implies.
    """

    name = "svd"

    def __call__(self, Y, k):
        Y = as_data_matrix(Y)
        k = _check_rank(Y, k)
        return self._fit(Y, k, *top_subspace(Y, k))

    def _fit(self, Y, k, Q, side):
        Qk = Q[:, :k]
        if side == "left":
            left, right = Qk, Qk.T @ Y
        else:
            left, right = Y @ Qk, Qk.T
        Xhat = left @ right
        pooled = float(np.mean((Y - Xhat) ** 2))
        return FactorFit(Xhat, np.full(Y.shape[0], pooled), k, 0, left, right)

    def path(self, Y, ks):
        Y = as_data_matrix(Y)
        ks = [_check_rank(Y, k) for k in ks]
        if not ks:
            return
        Q, side = top_subspace(Y, max(ks))
        for k in ks:
            yield k, self._fit(Y, k, Q, side)

    def __repr__(self):
        return "SvdEstimator()"
