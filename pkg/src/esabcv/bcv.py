"""Bi-cross-validation (BCV) choice of the number of factors.

A random block of ``N0`` rows and ``n0`` columns is held out. The estimator
is fit on the held-in block ``Y11`` and the held-out block is predicted as::

    X00hat = Y01 (S1^{-1/2} X11hat)^+ S1^{-1/2} Y10

which does not depend on how ``X11hat`` is factored. Averaging the holdout
mean squared error over replicates gives a prediction-error curve whose
minimiser is the selected rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .esa import EsaEstimator, FactorFit
from .exceptions import (
    DegenerateFactorizationError,
    DegenerateFitError,
    InvalidInputError,
    InvalidRankError,
    NoFeasibleRankError,
    VarianceCollapseError,
)
from .matops import as_data_matrix, pinv_factored, svd, truncate
from .seeding import child_seeds

DEFAULT_REPS = 50
PLOT_REPS = 200
DEFAULT_KMAX = 16
GUARD_DECADES = 6.0


@dataclass(frozen=True)
class HoldoutPlan:
    """Held-out row and column indices of one BCV replicate."""

    row_idx_out: np.ndarray
    col_idx_out: np.ndarray
    N: int
    n: int

    @property
    def rho(self) -> float:
        N0, n0 = len(self.row_idx_out), len(self.col_idx_out)
        return (self.n - n0) * (self.N - N0) / (self.n * self.N)

    def row_idx_in(self):
        return np.setdiff1d(np.arange(self.N), self.row_idx_out)

    def col_idx_in(self):
        return np.setdiff1d(np.arange(self.n), self.col_idx_out)

    def blocks(self, Y):
        """Return ``(Y00, Y01, Y10, Y11)``."""
        ro, co = self.row_idx_out, self.col_idx_out
        ri, ci = self.row_idx_in(), self.col_idx_in()
        return (Y[np.ix_(ro, co)], Y[np.ix_(ro, ci)], Y[np.ix_(ri, co)], Y[np.ix_(ri, ci)])


@dataclass(frozen=True)
class BcvCurve:
    """Holdout errors per replicate and rank, and the selected rank.

    ``pe`` is ``reps x len(ks)`` with NaN where the rank was not evaluated.
    ``pe_mean`` is NaN for ranks excluded from the argmin. ``truncated_at``
    records, per replicate, the rank at which the variance guard stopped the
    scan (-1 when it never fired).
    """

    ks: np.ndarray
    pe: np.ndarray
    pe_mean: np.ndarray
    khat: int
    truncated_at: np.ndarray

    @property
    def evaluated(self) -> np.ndarray:
        return np.sum(~np.isnan(self.pe), axis=0)


def holdout_fraction(gamma: float) -> tuple[float, float]:
    """Held-in fraction ``rho`` for aspect ratio ``gamma = N/n``.

    ``sqrt(rho) = sqrt(2) / (sqrt(g) + sqrt(g + 3))`` with
    ``g = ((gamma^{1/2} + gamma^{-1/2}) / 2)^2``. Returns ``(rho, g)``.
    """
    if not gamma > 0 or not math.isfinite(gamma):
        raise InvalidInputError(f"aspect ratio must be positive, got {gamma}")
    g = ((math.sqrt(gamma) + 1.0 / math.sqrt(gamma)) / 2.0) ** 2
    root = math.sqrt(2.0) / (math.sqrt(g) + math.sqrt(g + 3.0))
    return root**2, g


def _clamp(v, lo, hi):
    return max(lo, min(hi, v))


def partition_sizes(N: int, n: int) -> tuple[int, int]:
    """Held-out sizes ``(N0, n0)`` making ``Y11`` as square as possible.

    The held-in area ``a = rho N n`` is given sides near ``sqrt(a)``. When one
    side hits its bound the other is recomputed from ``a``. Both held-in and
    held-out blocks keep at least one row and column (held-in at least two).
    """
    if N < 3 or n < 3:
        raise InvalidInputError("BCV partitions need N >= 3 and n >= 3")
    rho, _ = holdout_fraction(N / n)
    a = rho * N * n
    N1 = _clamp(round(math.sqrt(a)), 2, N - 1)
    n1_free = round(a / N1)
    n1 = _clamp(n1_free, 2, n - 1)
    if n1 != n1_free:
        N1 = _clamp(round(a / n1), 2, N - 1)
    return N - N1, n - n1


def sample_partition(rng: np.random.Generator, N: int, n: int, N0: int, n0: int) -> HoldoutPlan:
    """Uniform random held-out rows and columns, sampled without replacement."""
    if not (1 <= N0 <= N - 2 and 1 <= n0 <= n - 2):
        raise InvalidInputError(f"invalid holdout sizes N0={N0}, n0={n0} for {N}x{n}")
    rows = np.sort(rng.choice(N, size=N0, replace=False))
    cols = np.sort(rng.choice(n, size=n0, replace=False))
    return HoldoutPlan(rows, cols, N, n)


def _heldout_from_factors(Y01, Y10, left, right, sigma1):
    w = 1.0 / np.sqrt(np.asarray(sigma1, dtype=float))
    if left.shape[1] == 0:
        return np.zeros((Y01.shape[0], Y10.shape[1]))
    try:
        P = pinv_factored(w[:, None] * left, right)
    except DegenerateFactorizationError as exc:
        raise DegenerateFitError(str(exc)) from exc
    B = w[:, None] * Y10
    (N0, n1), N1, n0 = Y01.shape, P.shape[1], B.shape[1]
    if N0 * N1 * (n1 + n0) <= n1 * n0 * (N1 + N0):
        return (Y01 @ P) @ B
    return Y01 @ (P @ B)


def predict_heldout(Y01, Y10, X11hat, Sigma1hat, k: int) -> np.ndarray:
    """Predict the held-out block from the held-in fit.

    The pseudo-inverse of ``S1^{-1/2} X11hat`` is taken from its rank-``k``
    SVD; a numerical rank below ``k`` raises :class:`DegenerateFitError`.
    """
    Y01 = np.asarray(Y01, dtype=float)
    Y10 = np.asarray(Y10, dtype=float)
    X11hat = np.asarray(X11hat, dtype=float)
    s1 = np.asarray(Sigma1hat, dtype=float).ravel()
    if not np.all(s1 > 0):
        raise InvalidInputError("held-in variances must be positive")
    if k == 0:
        return np.zeros((Y01.shape[0], Y10.shape[1]))
    w = 1.0 / np.sqrt(s1)
    s = truncate(svd(w[:, None] * X11hat), k)
    if not s.d[-1] > 1e-12 * s.d[0]:
        raise DegenerateFitError(f"held-in fit has numerical rank below {k}")
    pinv = (s.V / s.d) @ s.U.T
    return (Y01 @ pinv) @ (w[:, None] * Y10)


def variance_guard(Sigma1hat) -> bool:
    """True when the geometric mean of the variances is below ``1e-6`` times the largest."""
    s = np.asarray(Sigma1hat, dtype=float).ravel()
    if np.any(s < 0):
        raise InvalidInputError("variances must be nonnegative")
    if np.any(s == 0):
        return True
    logs = np.log10(s)
    return bool(np.mean(logs) < -GUARD_DECADES + np.max(logs))


def default_ks(N: int, n: int, kmax: int = DEFAULT_KMAX) -> list[int]:
    N0, n0 = partition_sizes(N, n)
    return list(range(0, min(kmax, min(N - N0, n - n0) - 1) + 1))


def _fit_sequence(estimator, Y11, ks):
    path = getattr(estimator, "path", None)
    if path is not None:
        yield from path(Y11, ks)
    else:
        for k in ks:
            yield k, estimator(Y11, k)


def bcv_replicate(Y, ks, rng: np.random.Generator, estimator, sizes=None):
    """Holdout errors of one random partition; NaN past the guard.

    Returns ``(pe_row, truncated_at)``.
    """
    N, n = Y.shape
    N0, n0 = partition_sizes(N, n) if sizes is None else sizes
    plan = sample_partition(rng, N, n, N0, n0)
    Y00, Y01, Y10, Y11 = plan.blocks(Y)
    pe = np.full(len(ks), np.nan)
    pos = {k: i for i, k in enumerate(ks)}
    truncated_at = -1
    fits = _fit_sequence(estimator, Y11, ks)
    while True:
        try:
            k, fit = next(fits)
        except StopIteration:
            break
        except VarianceCollapseError:
            # the rank being fitted cannot be evaluated; nothing larger either
            done = np.flatnonzero(~np.isnan(pe))
            truncated_at = ks[done[-1] + 1] if done.size else ks[0]
            break
        try:
            X00 = _heldout_from_factors(Y01, Y10, fit.left, fit.right, fit.Sigmahat)
        except DegenerateFitError:
            truncated_at = k
            break
        pe[pos[k]] = np.mean((Y00 - X00) ** 2)
        if variance_guard(fit.Sigmahat):
            truncated_at = k
            break
    return pe, truncated_at


def bcv_select(Y, ks: Optional[Sequence[int]] = None, reps: int = DEFAULT_REPS,
               rng: Optional[np.random.Generator] = None, estimator=None,
               min_coverage: float = 0.5) -> BcvCurve:
    """Choose the rank minimising the average holdout prediction error.

    ``estimator`` is any callable ``(Y, k) -> FactorFit``; an optional
    ``path(Y, ks)`` method lets it share work across ranks. The default is
    ESA with three steps. Each replicate draws its partition from its own
    sub-stream of ``rng``. A rank enters the argmin only if at least
    ``min_coverage`` of the replicates evaluated it.
    """
    Y = as_data_matrix(Y, min_dim=3)
    N, n = Y.shape
    if reps < 1:
        raise InvalidInputError("reps must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    estimator = EsaEstimator() if estimator is None else estimator
    sizes = partition_sizes(N, n)
    N1, n1 = N - sizes[0], n - sizes[1]
    ks = default_ks(N, n) if ks is None else sorted(int(k) for k in ks)
    if not ks or ks[0] < 0 or ks[-1] >= min(N1, n1):
        raise InvalidRankError(f"candidate ranks must lie in [0, {min(N1, n1)})")
    pe = np.empty((reps, len(ks)))
    truncated = np.empty(reps, dtype=int)
    for r, seed in enumerate(child_seeds(rng, reps)):
        pe[r], truncated[r] = bcv_replicate(Y, ks, np.random.default_rng(seed), estimator, sizes)
    counts = np.sum(~np.isnan(pe), axis=0)
    keep = counts >= min_coverage * reps
    keep &= counts > 0
    if not keep.any():
        raise NoFeasibleRankError("every candidate rank was excluded by the variance guard")
    pe_mean = np.full(len(ks), np.nan)
    pe_mean[keep] = np.nansum(pe[:, keep], axis=0) / counts[keep]
    khat = ks[int(np.nanargmin(pe_mean))]
    return BcvCurve(np.asarray(ks), pe, pe_mean, int(khat), truncated)


def bcv_fit(Y, ks=None, reps=DEFAULT_REPS, rng=None, estimator=None) -> tuple[FactorFit, BcvCurve]:
    """Select the rank by BCV, then refit on the full matrix at that rank."""
    estimator = EsaEstimator() if estimator is None else estimator
    curve = bcv_select(Y, ks, reps, rng, estimator)
    return estimator(as_data_matrix(Y), curve.khat), curve
