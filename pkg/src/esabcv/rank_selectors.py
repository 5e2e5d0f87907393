"""Baseline rules for choosing the number of factors.

* :func:`pa_select`  permutation parallel analysis on the correlation matrix
* :func:`ed_select`  eigenvalue difference with Onatski-style calibration
* :func:`er_select`  eigenvalue ratio with a mock zeroth eigenvalue
* :func:`ic1_select` Bai-Ng ``IC1`` information criterion
* :func:`ne_select`  Nadakuditi-Edelman estimator for white noise

Spectral rules work on ``lambda_i^2``, the eigenvalues of ``Y Y^T / n``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .exceptions import DegenerateVariableError, InvalidInputError, InvalidRankError
from .matops import SampleSpectrum, as_data_matrix, sample_spectrum
from .seeding import child_seeds

log = logging.getLogger(__name__)

ED_WINDOW = 5
ED_MAX_ITER = 50


@dataclass(frozen=True)
class SelectorConfig:
    """Tuning shared by the baseline selectors.

    ``kmax`` bounds every selector's answer. ``ed_delta`` fixes the ED
    threshold instead of calibrating it. ``ne_full_scan`` lets NE scan all
    ``i < min(N, n)`` rather than stopping at ``kmax``.
    """

    kmax: int = 16
    n_perm: int = 99
    pa_quantile: float = 0.95
    ed_delta: Optional[float] = None
    ne_full_scan: bool = False

    def __post_init__(self):
        if self.kmax < 1:
            raise InvalidInputError("kmax must be positive")
        if self.n_perm < 19:
            raise InvalidInputError("n_perm must be at least 19")
        if not 0 < self.pa_quantile < 1:
            raise InvalidInputError("pa_quantile must lie in (0, 1)")
        if self.ed_delta is not None and self.ed_delta <= 0:
            raise InvalidInputError("ed_delta must be positive")

    def check_dims(self, N, n):
        if not self.kmax < min(N, n):
            raise InvalidRankError(f"kmax={self.kmax} must be below min(N, n)={min(N, n)}")


def _top_eigvals(Z, count):
    # leading eigenvalues of Z Z^T / n via the smaller Gram matrix
    N, n = Z.shape
    G = Z @ Z.T if N <= n else Z.T @ Z
    p = G.shape[0]
    count = min(count, p)
    w = scipy.linalg.eigh(G, eigvals_only=True, subset_by_index=[p - count, p - 1], driver="evr")
    return w[::-1] / n


def correlation_eigenvalues(Y, count=None):
    """Leading eigenvalues of the sample correlation matrix of the rows of ``Y``."""
    Z = _standardize(as_data_matrix(Y))
    return _top_eigvals(Z, min(Z.shape) if count is None else count)


def _standardize(Y):
    centered = Y - Y.mean(axis=1, keepdims=True)
    sd = np.sqrt(np.mean(centered**2, axis=1))
    bad = np.flatnonzero((np.ptp(Y, axis=1) == 0) | ~(sd > 0))
    if bad.size:
        raise DegenerateVariableError(f"row {bad[0]} is constant", row=int(bad[0]))
    return centered / sd[:, None]


def pa_select(Y, rng: np.random.Generator, cfg: SelectorConfig = SelectorConfig(), *,
              return_details=False):
    """Permutation parallel analysis.

    Each row of ``Y`` is permuted independently ``n_perm`` times; factor
    ``j`` is kept while the observed ``j``-th correlation eigenvalue exceeds
    the ``pa_quantile`` quantile of the permuted ``j``-th eigenvalues and all
    earlier factors were kept.
    """
    Y = as_data_matrix(Y)
    cfg.check_dims(*Y.shape)
    Z = _standardize(Y)
    kmax = cfg.kmax
    observed = _top_eigvals(Z, kmax)
    null = np.empty((cfg.n_perm, kmax))
    for p, seed in enumerate(child_seeds(rng, cfg.n_perm)):
        # standardisation commutes with within-row permutation
        Zp = np.random.default_rng(seed).permuted(Z, axis=1)
        null[p] = _top_eigvals(Zp, kmax)
    cutoffs = np.quantile(null, cfg.pa_quantile, axis=0)
    khat = 0
    for j in range(kmax):
        if observed[j] > cutoffs[j]:
            khat += 1
        else:
            break
    if return_details:
        return khat, {"observed": observed, "cutoffs": cutoffs}
    return khat


def _ed_count(ev, kmax, delta):
    diffs = ev[:kmax] - ev[1 : kmax + 1]
    hits = np.flatnonzero(diffs >= delta)
    return int(hits[-1] + 1) if hits.size else 0


def ed_calibrate(ev, kmax):
    """Iterated calibration of the ED threshold.

    Starting from ``j = kmax + 1``, regress ``ev[j..j+4]`` on
    ``(j-1)^{2/3} .. (j+3)^{2/3}`` (with intercept), set ``delta = 2|slope|``,
    recompute ``khat`` and restart from ``j = khat + 1`` until ``khat`` stops
    changing. The window slides down when it would run off the spectrum.
    Returns ``(khat, delta)``.
    """
    ev = np.asarray(ev, dtype=float)
    m = len(ev)
    if m < ED_WINDOW:
        raise InvalidInputError(f"ED calibration needs at least {ED_WINDOW} eigenvalues")
    khat = kmax
    seen = {}
    delta = None
    for it in range(ED_MAX_ITER):
        j = min(khat + 1, m - ED_WINDOW + 1)  # 1-based start of the window
        idx = np.arange(j, j + ED_WINDOW)
        x = (idx - 1.0) ** (2.0 / 3.0)
        slope = np.polyfit(x, ev[idx - 1], 1)[0]
        delta = 2.0 * abs(slope)
        new = _ed_count(ev, kmax, delta)
        if new == khat:
            return khat, delta
        if new in seen:
            log.debug("ED calibration cycled at iteration %d", it)
            return new, delta
        seen[new] = delta
        khat = new
    return khat, delta


def ed_select(spec: SampleSpectrum, cfg: SelectorConfig = SelectorConfig(), *,
              return_details=False):
    """Eigenvalue difference rule ``max{i <= kmax : ev_i - ev_{i+1} >= delta}``."""
    ev = spec.eigenvalues
    kmax = cfg.kmax
    if kmax + 1 > len(ev):
        raise InvalidRankError(f"kmax+1={kmax + 1} exceeds spectrum length {len(ev)}")
    if cfg.ed_delta is not None:
        delta = cfg.ed_delta
        khat = _ed_count(ev, kmax, delta)
    else:
        khat, delta = ed_calibrate(ev, kmax)
    if return_details:
        return khat, {"delta": delta}
    return khat


def er_kmax(ev):
    """Default ``kmax`` for ER: eigenvalues above their mean, capped at ``m/10``."""
    m = len(ev)
    above = int(np.sum(ev >= ev.sum() / m))
    return max(1, min(above, int(math.floor(0.1 * m)), m - 1))


def er_select(spec: SampleSpectrum, cfg: Optional[SelectorConfig] = None, *, kmax=None,
              return_details=False):
    """Eigenvalue ratio rule ``argmax_{0<=i<=kmax} ev_i / ev_{i+1}``.

    ``ev_0`` is the mock eigenvalue ``sum(ev) / log(m)``. ``kmax`` defaults to
    :func:`er_kmax`; pass it explicitly to override. A zero denominator makes
    that ratio ``+inf``, and the first such ``i`` wins.
    """
    ev = spec.eigenvalues
    m = len(ev)
    if m < 3:
        raise InvalidInputError("ER needs at least 3 eigenvalues")
    kmax = er_kmax(ev) if kmax is None else int(kmax)
    if cfg is not None:
        kmax = min(kmax, cfg.kmax)
    kmax = min(kmax, m - 1)
    ext = np.concatenate([[ev.sum() / math.log(m)], ev])
    num, den = ext[: kmax + 1], ext[1 : kmax + 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    khat = int(np.argmax(ratios))
    if return_details:
        return khat, {"ratios": ratios, "kmax": kmax}
    return khat


def ic1_values(spec: SampleSpectrum, kmax):
    """``IC1(k)`` for ``k = 0..kmax``; ``V(k)`` from the discarded singular values."""
    N, n = spec.N, spec.n
    ev = spec.eigenvalues
    # ||Y - Y(k)||_F^2 / (nN) = sum_{j>k} n lambda_j^2 / (nN)
    tail = np.concatenate([np.cumsum(ev[::-1])[::-1], [0.0]])[: kmax + 1] / N
    penalty = (n + N) / (n * N) * math.log(n * N / (n + N))
    with np.errstate(divide="ignore"):
        crit = np.log(tail) + np.arange(kmax + 1) * penalty
    return tail, crit


def ic1_select(Y, cfg: SelectorConfig = SelectorConfig(), *, spec=None, return_details=False):
    """Bai-Ng ``IC1`` minimised over ``0 <= k <= kmax``.

    ``V(k)`` is the mean squared residual of the rank-``k`` truncated SVD of
    ``Y``. If some ``V(k)`` is exactly zero, the smallest such ``k`` is
    returned and a warning is logged.
    """
    if spec is None:
        spec = sample_spectrum(Y)
    cfg.check_dims(spec.N, spec.n)
    V, crit = ic1_values(spec, cfg.kmax)
    zero = np.flatnonzero(V <= 0)
    if zero.size:
        log.warning("IC1: V(k) = 0 at k=%d, returning it", zero[0])
        khat = int(zero[0])
    else:
        khat = int(np.argmin(crit))
    if return_details:
        return khat, {"V": V, "ic1": crit}
    return khat


def ne_statistics(spec: SampleSpectrum, imax):
    """``t_i`` and the NE objective for ``i = 0..imax-1``.

    The spectrum is padded with zeros up to length ``N`` (the rank-deficient
    part of ``Y Y^T / n`` when ``N > n``). The scan stops early where the tail
    sum of eigenvalues vanishes.
    """
    N, n = spec.N, spec.n
    ev = np.zeros(N)
    ev[: len(spec.eigenvalues)] = spec.eigenvalues
    s1 = np.cumsum(ev[::-1])[::-1]
    s2 = np.cumsum((ev**2)[::-1])[::-1]
    t, obj = [], []
    for i in range(imax):
        if not s1[i] > 0:
            break
        ti = N * ((N - i) * s2[i] / s1[i] ** 2 - (1 + N / n)) - N / n
        t.append(ti)
        obj.append(0.5 * (n / N) ** 2 * ti**2 + 2 * (i + 1))
    return np.asarray(t), np.asarray(obj)


def ne_select(spec: SampleSpectrum, cfg: SelectorConfig = SelectorConfig(), *,
              return_details=False):
    """Nadakuditi-Edelman rank estimate ``argmin_i (n/N)^2 t_i^2 / 2 + 2(i+1)``."""
    p = min(spec.N, spec.n)
    if p < 2:
        raise InvalidInputError("NE needs at least 2 eigenvalues")
    imax = p if cfg.ne_full_scan else min(p, cfg.kmax + 1)
    t, obj = ne_statistics(spec, imax)
    khat = int(np.argmin(obj)) if len(obj) else 0
    if return_details:
        return khat, {"t": t, "objective": obj}
    return khat
