"""Synthetic heteroscedastic factor data with planted factor strengths.

Data are generated as ``Y = S^{1/2} (sqrt(n) U D V^T + E)`` with ``E`` IID
standard Gaussian and ``S = diag(sigma_i^2)`` inverse-gamma with mean 1.
Factor strengths ``d_i^2`` are placed relative to the detection threshold
``sqrt(gamma)`` and the estimation threshold of the white-noise truncated
SVD, both scaled by the average noise variance:

* undetectable, below detection
* harmful, between detection and estimation
* useful, ``1.5, 2.5, ...`` times the estimation threshold
* strong, ``1.5 N, 2.5 N, ...``

``U`` is not uniform: it is the left frame of ``S^{-1/2} U* D V^T`` for a
uniform ``U*``, which decouples the row signal energy of ``X`` from
``sigma_i^2``.

Random draws happen in a fixed order: ``sigma^2``, ``V``, ``U*``, ``E``.
That order is what makes a dataset reproducible from its seed alone, and
:meth:`GeneratedDataset.noise_matrix` recovers ``E`` from ``Y`` and ``X``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import InvalidInputError, InvalidRankError, StrengthCollisionError
from .matops import stiefel_uniform
from .seeding import as_generator

CATEGORIES = ("strong", "useful", "harmful", "undetectable")

PRESET_SIZES = (
    (20, 1000), (100, 5000), (20, 100), (200, 1000), (50, 50),
    (500, 500), (100, 20), (1000, 200), (1000, 20), (5000, 100),
)


@dataclass(frozen=True)
class ScenarioSpec:
    """Number of factors in each strength category."""

    n_strong: int = 0
    n_useful: int = 0
    n_harmful: int = 0
    n_undetectable: int = 0
    name: str = "custom"
    allow_null: bool = field(default=False, repr=False)

    def __post_init__(self):
        counts = (self.n_strong, self.n_useful, self.n_harmful, self.n_undetectable)
        if any(c < 0 for c in counts):
            raise InvalidInputError("factor counts must be nonnegative")
        if sum(counts) == 0 and not self.allow_null:
            raise InvalidInputError("a scenario needs at least one factor")

    @property
    def k0(self) -> int:
        return self.n_strong + self.n_useful + self.n_harmful + self.n_undetectable

    def counts(self) -> dict:
        return {"strong": self.n_strong, "useful": self.n_useful,
                "harmful": self.n_harmful, "undetectable": self.n_undetectable}

    @classmethod
    def null(cls):
        return cls(name="null", allow_null=True)

    @classmethod
    def preset(cls, name: str) -> "ScenarioSpec":
        key = str(name) if str(name) in SCENARIOS else f"Type-{name}"
        if key not in SCENARIOS:
            raise InvalidInputError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
        return SCENARIOS[key]


def _preset(i, strong, useful, harmful, undetectable):
    return ScenarioSpec(strong, useful, harmful, undetectable, name=f"Type-{i}")


SCENARIOS = {
    s.name: s
    for s in (
        _preset(1, 0, 6, 1, 1),
        _preset(2, 2, 4, 1, 1),
        _preset(3, 3, 3, 1, 1),
        _preset(4, 3, 1, 3, 1),
        _preset(5, 1, 3, 3, 1),
        _preset(6, 0, 1, 6, 1),
    )
}


@dataclass(frozen=True)
class NoiseSpec:
    """Inverse-gamma noise variances with mean 1 and variance ``var_sigma2``.

    ``var_sigma2 = 0`` means homoscedastic unit variances. Otherwise the
    moment equations ``beta/(alpha-1) = 1`` and
    ``beta^2/((alpha-1)^2 (alpha-2)) = var_sigma2`` give
    ``alpha = 2 + 1/var_sigma2`` and ``beta = alpha - 1``.
    """

    var_sigma2: float = 1.0

    def __post_init__(self):
        if not self.var_sigma2 >= 0 or not math.isfinite(self.var_sigma2):
            raise InvalidInputError("var_sigma2 must be finite and nonnegative")

    @property
    def params(self) -> Optional[tuple[float, float]]:
        if self.var_sigma2 == 0:
            return None
        alpha = 2.0 + 1.0 / self.var_sigma2
        return alpha, alpha - 1.0


def estimation_threshold(gamma: float) -> float:
    h = (1.0 + gamma) / 2.0
    return h + math.sqrt(h * h + 3.0 * gamma)


def thresholds(gamma: float, sigma_bar2: float = 1.0) -> tuple[float, float]:
    """Detection and estimation thresholds on ``d^2``, scaled by the mean variance."""
    if not gamma > 0 or not sigma_bar2 > 0:
        raise InvalidInputError("gamma and sigma_bar2 must be positive")
    return sigma_bar2 * math.sqrt(gamma), sigma_bar2 * estimation_threshold(gamma)


def factor_strengths(spec: ScenarioSpec, N: int, gamma: float, sigma_bar2: float = 1.0):
    """Strength ladder ``d^2`` in strictly decreasing order with category labels.

    Returns ``(d2, labels)``. Strong values are not scaled by the mean noise
    variance; the weak categories are.
    """
    mu, mu_star = thresholds(gamma, sigma_bar2)
    ladders = {
        "strong": [(j + 0.5) * N for j in range(1, spec.n_strong + 1)],
        "useful": [(j + 0.5) * mu_star for j in range(1, spec.n_useful + 1)],
        "harmful": [mu + (mu_star - mu) * j / (spec.n_harmful + 1)
                    for j in range(1, spec.n_harmful + 1)],
        "undetectable": [mu * j / (spec.n_undetectable + 1)
                         for j in range(1, spec.n_undetectable + 1)],
    }
    d2, labels = [], []
    for cat in CATEGORIES:
        vals = sorted(ladders[cat], reverse=True)
        if d2 and vals and not vals[0] <= d2[-1]:
            raise StrengthCollisionError(
                f"{cat} strength {vals[0]:.4g} exceeds a stronger category ({d2[-1]:.4g})"
            )
        d2.extend(vals)
        labels.extend([cat] * len(vals))
    d2 = np.asarray(d2, dtype=float)
    for i in range(1, len(d2)):
        # only cross-category ties remain here; nudge downwards
        if d2[i] >= d2[i - 1]:
            d2[i] = d2[i - 1] * (1 - 1e-6)
    return d2, tuple(labels)


def sample_sigmas(rng: np.random.Generator, N: int, noise: NoiseSpec) -> np.ndarray:
    """IID noise variances; inverse-gamma draws are reciprocals of gamma draws."""
    if noise.params is None:
        return np.ones(N)
    alpha, beta = noise.params
    return 1.0 / rng.gamma(shape=alpha, scale=1.0 / beta, size=N)


def sample_signal(rng: np.random.Generator, N: int, n: int, d2, Sigma):
    """Draw ``(X, U, D, V)`` with ``S^{-1/2} X = sqrt(n) U D V^T``.

    ``V`` and an intermediate ``U*`` are Haar on their Stiefel manifolds;
    ``U`` is the left singular frame of ``S^{-1/2} U* D V^T``. The signal is
    rebuilt from the new ``U`` with the original ``D`` and ``V`` so the
    planted strengths are exact. ``D`` is returned as the vector of ``d_i``.
    """
    d = np.sqrt(np.asarray(d2, dtype=float))
    k0 = len(d)
    if k0 > min(N, n):
        raise InvalidRankError(f"k0={k0} exceeds min(N, n)={min(N, n)}")
    s2 = np.asarray(Sigma, dtype=float)
    V = stiefel_uniform(rng, n, k0)
    Ustar = stiefel_uniform(rng, N, k0)
    # S^{-1/2} U* D V^T = M V^T, and V has orthonormal columns, so the left
    # frame of the big matrix is the left frame of the small N x k0 matrix M
    M = (Ustar * d) / np.sqrt(s2)[:, None]
    P, _, _ = np.linalg.svd(M, full_matrices=False)
    # keep signs deterministic: align each column with the corresponding U* column
    signs = np.sign(np.sum(P * Ustar, axis=0))
    signs[signs == 0] = 1.0
    U = P * signs
    X = math.sqrt(n) * np.sqrt(s2)[:, None] * ((U * d) @ V.T)
    return X, U, d, V


@dataclass(frozen=True)
class GeneratedDataset:
    """A simulated matrix with its full ground truth."""

    Y: np.ndarray
    X: np.ndarray
    Sigma: np.ndarray
    U: np.ndarray
    D: np.ndarray
    V: np.ndarray
    categories: tuple
    spec: ScenarioSpec
    noise: NoiseSpec
    seed: Optional[int] = None

    @property
    def k0(self) -> int:
        return len(self.D)

    @property
    def shape(self):
        return self.Y.shape

    def noise_matrix(self) -> np.ndarray:
        """``E = S^{-1/2} (Y - X)``."""
        return (self.Y - self.X) / np.sqrt(self.Sigma)[:, None]

    def sidecar(self) -> dict:
        N, n = self.Y.shape
        return {
            "seed": self.seed,
            "N": N,
            "n": n,
            "scenario": {k: v for k, v in asdict(self.spec).items() if k != "allow_null"},
            "var_sigma2": self.noise.var_sigma2,
            "sigma2": self.Sigma.tolist(),
            "d2": (self.D**2).tolist(),
            "categories": list(self.categories),
        }

    def export(self, out_dir, stem="dataset"):
        """Write ``<stem>.csv`` (the matrix ``Y``) and ``<stem>.json`` (ground truth)."""
        from .io import write_matrix_csv

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(out / f"{stem}.csv", self.Y)
        (out / f"{stem}.json").write_text(json.dumps(self.sidecar(), indent=2) + "\n")
        return out / f"{stem}.csv", out / f"{stem}.json"


def generate_dataset(rng, spec: ScenarioSpec, N: int, n: int, noise: NoiseSpec = NoiseSpec()):
    """Simulate one dataset; ``rng`` may be a Generator or an integer seed."""
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    rng = as_generator(rng)
    if N < 2 or n < 2:
        raise InvalidInputError("N and n must be at least 2")
    sigma2 = sample_sigmas(rng, N, noise)
    d2, labels = factor_strengths(spec, N, N / n, float(np.mean(sigma2)))
    X, U, d, V = sample_signal(rng, N, n, d2, sigma2)
    E = rng.standard_normal((N, n))
    Y = X + np.sqrt(sigma2)[:, None] * E
    return GeneratedDataset(Y, X, sigma2, U, d, V, labels, spec, noise, seed)
