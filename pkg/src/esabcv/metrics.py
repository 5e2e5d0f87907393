"""Signal-recovery loss, oracle ranks, REE and the comparison baselines."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import Mapping, Optional, Sequence

import numpy as np

from .esa import EsaEstimator, FactorFit, SvdEstimator, esa_fit, esa_steps
from .exceptions import (
    DegenerateFitError,
    EsaBcvError,
    InvalidInputError,
    VarianceCollapseError,
)
from .io import format_float
from .matops import as_data_matrix, top_subspace

log = logging.getLogger(__name__)

TIE_RTOL = 1e-12
DEFAULT_THRESHOLDS = np.round(np.linspace(0.0, 5.0, 101), 10)


def err_x(Xhat, X) -> float:
    """Squared Frobenius loss ``||Xhat - X||_F^2``."""
    Xhat = np.asarray(Xhat, dtype=float)
    X = np.asarray(X, dtype=float)
    if Xhat.shape != X.shape:
        raise InvalidInputError(f"shape mismatch {Xhat.shape} vs {X.shape}")
    return float(np.sum((Xhat - X) ** 2))


def true_pe(X, Xhat, Sigma) -> float:
    """True prediction error ``||X - Xhat||_F^2 / (nN) + mean(sigma^2)``."""
    X = np.asarray(X, dtype=float)
    return err_x(Xhat, X) / X.size + float(np.mean(Sigma))


def loss_profile(Y, X, estimator, ks) -> dict:
    """``err_x`` of the estimator at every ``k``; ``inf`` where the fit failed."""
    ks = [int(k) for k in ks]
    losses = {}
    path = getattr(estimator, "path", None)
    if path is not None:
        try:
            for k, fit in path(Y, ks):
                losses[k] = err_x(fit.Xhat, X)
        except (VarianceCollapseError, DegenerateFitError) as exc:
            log.debug("path fit stopped: %s", exc)
    for k in ks:
        if k in losses:
            continue
        try:
            losses[k] = err_x(estimator(Y, k).Xhat, X)
        except (VarianceCollapseError, DegenerateFitError):
            losses[k] = math.inf
    return {k: losses[k] for k in ks}


def oracle_rank(Y, X, estimator=None, ks: Sequence[int] = ()) -> tuple[int, dict]:
    """Rank with the smallest true loss for ``estimator``; ties go to smaller ``k``.

    Losses within ``TIE_RTOL * ||Y||_F^2`` of the minimum count as tied, so
    ranks that differ only by rounding (an exactly low-rank signal) resolve
    to the smallest of them. Returns ``(kstar, losses)``; infeasible ranks
    carry ``inf`` and are never chosen.
    """
    if len(ks) == 0:
        raise InvalidInputError("ks must be nonempty")
    estimator = EsaEstimator() if estimator is None else estimator
    losses = loss_profile(Y, X, estimator, ks)
    feasible = {k: v for k, v in losses.items() if math.isfinite(v)}
    if not feasible:
        raise EsaBcvError("estimator failed at every candidate rank")
    best = min(feasible.values())
    tol = TIE_RTOL * float(np.sum(np.asarray(Y, dtype=float) ** 2))
    kstar = min(k for k, v in feasible.items() if v <= best + tol)
    return kstar, losses


def ree(khat: int, losses: Mapping[int, float], kstar: int) -> float:
    """Relative estimation error ``losses[khat] / losses[kstar] - 1``.

    Clamped at 0: a ``kstar`` chosen among numerically tied ranks can sit a
    rounding error above the smallest loss.
    """
    num, den = losses[khat], losses[kstar]
    if den == 0:
        if num == 0:
            return 0.0
        log.warning("REE is infinite: oracle loss is zero but loss at khat=%d is %g", khat, num)
        return math.inf
    return max(float(num / den - 1.0), 0.0)


class OracleSvdEstimator:
    """Truncated SVD of ``S^{-1/2} Y`` using the true noise variances."""

    name = "osvd"

    def __init__(self, Sigma):
        self.Sigma = np.asarray(Sigma, dtype=float)

    def __call__(self, Y, k):
        Y = as_data_matrix(Y)
        w = 1.0 / np.sqrt(self.Sigma)
        Q, side = top_subspace(w[:, None] * Y, k)
        return self._fit(Y, k, Q, side)

    def _fit(self, Y, k, Q, side):
        w = 1.0 / np.sqrt(self.Sigma)
        Qk = Q[:, :k]
        if side == "left":
            left, right = Qk / w[:, None], Qk.T @ (w[:, None] * Y)
        else:
            left, right = (w[:, None] * Y) @ Qk / w[:, None], Qk.T
        return FactorFit(left @ right, self.Sigma, k, 0, left, right)

    def path(self, Y, ks):
        Y = as_data_matrix(Y)
        ks = list(ks)
        if not ks:
            return
        Q, side = top_subspace(Y / np.sqrt(self.Sigma)[:, None], max(ks))
        for k in ks:
            yield k, self._fit(Y, k, Q, side)


def baseline_estimator(kind: str, Sigma=None):
    if kind == "svd":
        return SvdEstimator()
    if kind == "pca":
        return EsaEstimator(m=1)
    if kind == "esa":
        return EsaEstimator()
    if kind == "osvd":
        if Sigma is None:
            raise InvalidInputError("osvd needs the true noise variances")
        return OracleSvdEstimator(Sigma)
    raise InvalidInputError(f"unknown baseline {kind!r}")


def baseline_estimate(Y, k: int, kind: str, Sigma=None) -> FactorFit:
    """Comparison fit: ``svd``, ``pca`` (ESA with one step) or ``osvd`` (true variances)."""
    if kind == "pca":
        return esa_fit(Y, k, 1)
    return baseline_estimator(kind, Sigma)(Y, k)


@dataclass(frozen=True)
class EarlyStoppingProfile:
    """``errors[i, j]`` is the loss of ESA with ``ms[i]`` steps at rank ``ks[j]``.

    Infeasible cells are ``inf``. ``err_by_m[i]`` is the minimum over ranks and
    ``m_opt`` the step count achieving the overall minimum.
    """

    ks: np.ndarray
    ms: np.ndarray
    errors: np.ndarray
    err_by_m: np.ndarray
    m_opt: int

    def err(self, m: int) -> float:
        return float(self.err_by_m[list(self.ms).index(m)])

    def ratio(self, m: int, ref: Optional[int] = None) -> float:
        """``Err_X(m) / Err_X(ref)``; ``ref`` defaults to ``m_opt``."""
        ref = self.m_opt if ref is None else ref
        return self.err(m) / self.err(ref)


def early_stopping_profile(Y, X, ks, ms) -> EarlyStoppingProfile:
    """Oracle error of ESA as a function of the number of steps."""
    Y = as_data_matrix(Y)
    ms = np.asarray(sorted(set(int(m) for m in ms)))
    if ms.size == 0 or ms[0] < 1 or ms[-1] > 50:
        raise InvalidInputError("ms must be a nonempty subset of 1..50")
    ks = np.asarray(list(ks), dtype=int)
    errors = np.full((len(ms), len(ks)), np.inf)
    row_of = {int(m): i for i, m in enumerate(ms)}
    for j, k in enumerate(ks):
        try:
            for st in esa_steps(Y, int(k), int(ms[-1])):
                if st.step in row_of:
                    errors[row_of[st.step], j] = err_x(st.Xhat, X)
        except VarianceCollapseError:
            # the round that collapsed and all later ones stay infeasible; the
            # fitted Xhat of that round is still defined but Sigma is not
            pass
    err_by_m = errors.min(axis=1)
    m_opt = int(ms[int(np.argmin(err_by_m))])
    return EarlyStoppingProfile(ks, ms, errors, err_by_m, m_opt)


def survival_curve(rees, thresholds=None):
    """Proportion of REE values strictly above each threshold.

    ``+inf`` entries (flagged infinite REE) exceed every threshold.
    """
    r = np.asarray(list(rees), dtype=float)
    if np.any(np.isnan(r)) or np.any(r < 0):
        raise InvalidInputError("REE values must be nonnegative numbers")
    t = DEFAULT_THRESHOLDS if thresholds is None else np.asarray(thresholds, dtype=float)
    if r.size == 0:
        return t, np.zeros(len(t))
    r.sort()
    above = r.size - np.searchsorted(r, t, side="right")
    return t, above / r.size


@dataclass(frozen=True)
class BenchmarkRecord:
    """One method's outcome on one simulated replicate."""

    scenario: str
    N: int
    n: int
    var_sigma2: float
    replicate: int
    method: str
    khat: int
    kstar: int
    ree: float
    err_x: float
    seed: int
    wall_time: float = 0.0

    @classmethod
    def columns(cls, timing=False):
        names = [f.name for f in fields(cls)]
        return names if timing else [c for c in names if c != "wall_time"]

    def row(self, timing=False):
        out = []
        for name in self.columns(timing):
            v = getattr(self, name)
            out.append(format_float(v) if isinstance(v, float) else str(v))
        return out
