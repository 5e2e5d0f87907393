"""Experiment orchestration: seeded simulation benchmarks and real-data fits.

Every replicate of every cell is generated from its own seed
``mix_seed(master_seed, cell_index, replicate)`` so results do not depend on
the number of worker threads or on the order in which replicates finish.
Cells are enumerated scenario-major, then size, then noise level.

Within a replicate the generator seeded from that value first yields the
dataset seed and then one sub-stream per method in :data:`METHODS` order, so
adding or removing a method never changes the draws seen by the others.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bcv import PLOT_REPS, BcvCurve, bcv_select, default_ks
from .esa import FactorFit, esa_fit
from .exceptions import EsaBcvError, InvalidInputError
from .io import format_float, read_matrix_csv, write_matrix_csv, write_rows
from .matops import as_data_matrix, sample_spectrum
from .metrics import (
    BenchmarkRecord,
    baseline_estimator,
    loss_profile,
    oracle_rank,
    ree,
    survival_curve,
)
from .rank_selectors import (
    SelectorConfig,
    ed_select,
    er_select,
    ic1_select,
    ne_select,
    pa_select,
)
from .seeding import child_seeds, mix_seed
from .simgen import NoiseSpec, ScenarioSpec, generate_dataset

log = logging.getLogger(__name__)

METHODS = ("PA", "ED", "ER", "IC1", "NE", "BCV", "Oracle", "TrueK")
SELECTORS = ("PA", "ED", "ER", "IC1", "NE", "BCV")
NOISE_LEVELS = (0.0, 1.0, 10.0)


@dataclass(frozen=True)
class BcvOptions:
    reps: int = 50
    kmax: int = 16

    def __post_init__(self):
        if self.reps < 1 or self.kmax < 0:
            raise InvalidInputError("bcv reps must be >= 1 and kmax >= 0")


def _scenario_from(obj) -> ScenarioSpec:
    if isinstance(obj, ScenarioSpec):
        return obj
    if isinstance(obj, (str, int)):
        return ScenarioSpec.preset(obj)
    if isinstance(obj, dict):
        keys = {"n_strong", "n_useful", "n_harmful", "n_undetectable", "name"}
        unknown = set(obj) - keys
        if unknown:
            raise InvalidInputError(f"unknown scenario fields {sorted(unknown)}")
        return ScenarioSpec(**obj)
    raise InvalidInputError(f"cannot interpret scenario {obj!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Benchmark design: the cells are ``scenarios x sizes x noise_vars``.

    ``oracle`` names the estimator whose loss profile defines ``k*`` and the
    REE (``esa`` or ``svd``).
    """

    scenarios: tuple
    sizes: tuple
    noise_vars: tuple = (1.0,)
    methods: tuple = METHODS
    reps: int = 1
    master_seed: int = 0
    bcv: BcvOptions = BcvOptions()
    selector: SelectorConfig = SelectorConfig()
    oracle: str = "esa"

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "scenarios", tuple(_scenario_from(s) for s in self.scenarios))
        set_(self, "sizes", tuple((int(N), int(n)) for N, n in self.sizes))
        set_(self, "noise_vars", tuple(float(v) for v in self.noise_vars))
        set_(self, "methods", tuple(self.methods))
        if isinstance(self.bcv, dict):
            set_(self, "bcv", BcvOptions(**self.bcv))
        if isinstance(self.selector, dict):
            set_(self, "selector", SelectorConfig(**self.selector))
        if not self.scenarios or not self.sizes or not self.noise_vars:
            raise InvalidInputError("config needs at least one cell")
        if not self.methods:
            raise InvalidInputError("config needs at least one method")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InvalidInputError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise InvalidInputError("methods must be distinct")
        bad = [v for v in self.noise_vars if v not in NOISE_LEVELS]
        if bad:
            raise InvalidInputError(f"noise_vars must be among {NOISE_LEVELS}, got {bad}")
        if self.reps < 1:
            raise InvalidInputError("reps must be at least 1")
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidInputError("master_seed must be an unsigned 64-bit integer")
        if self.oracle not in ("esa", "svd"):
            raise InvalidInputError("oracle must be 'esa' or 'svd'")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown config fields {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scenarios"] = [
            {k: v for k, v in asdict(s).items() if k != "allow_null"} for s in self.scenarios
        ]
        out["sizes"] = [list(s) for s in self.sizes]
        return out

    def cells(self):
        """``(cell_index, scenario, (N, n), var_sigma2)`` in canonical order."""
        grid = itertools.product(self.scenarios, self.sizes, self.noise_vars)
        for i, (s, size, v) in enumerate(grid):
            yield i, s, size, v


@dataclass
class Failure:
    cell: int
    replicate: int
    method: Optional[str]
    error: str


@dataclass
class BenchmarkResult:
    records: list
    failures: list = field(default_factory=list)
    failed_cells: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed_cells


def select_rank(method: str, Y, rng: np.random.Generator, selector: SelectorConfig = SelectorConfig(),
                bcv: BcvOptions = BcvOptions(), estimator=None):
    """Run one rank selector on ``Y``; returns ``(khat, diagnostics)``.

    ``kmax`` is lowered to ``min(N, n) - 1`` for small matrices.
    """
    Y = as_data_matrix(Y)
    N, n = Y.shape
    p = min(N, n)
    if selector.kmax >= p:
        selector = SelectorConfig(**{**asdict(selector), "kmax": p - 1})
    if method == "BCV":
        ks = default_ks(N, n, bcv.kmax)
        curve = bcv_select(Y, ks, bcv.reps, rng, estimator)
        return curve.khat, {"pe_mean": curve.pe_mean, "ks": curve.ks}
    if method == "PA":
        return pa_select(Y, rng, selector, return_details=True)
    if method == "IC1":
        return ic1_select(Y, selector, return_details=True)
    spec = sample_spectrum(Y)
    if method == "ED":
        return ed_select(spec, selector, return_details=True)
    if method == "ER":
        return er_select(spec, selector, return_details=True)
    if method == "NE":
        return ne_select(spec, selector, return_details=True)
    raise InvalidInputError(f"unknown selector {method!r}; choose from {list(SELECTORS)}")


def _replicate(cfg: ExperimentConfig, task):
    cell, scenario, (N, n), var, rep = task
    seed = mix_seed(cfg.master_seed, cell, rep)
    seeds = child_seeds(np.random.default_rng(seed), 1 + len(METHODS))
    records, failures = [], []
    try:
        ds = generate_dataset(seeds[0], scenario, N, n, NoiseSpec(var))
        ks = list(range(0, min(max(cfg.selector.kmax, ds.k0), min(N, n) - 1) + 1))
        estimator = baseline_estimator(cfg.oracle)
        kstar, losses = oracle_rank(ds.Y, ds.X, estimator, ks)
    except (EsaBcvError, ValueError, ArithmeticError) as exc:
        log.warning("cell %d replicate %d: %s", cell, rep, exc)
        return records, [Failure(cell, rep, None, f"{type(exc).__name__}: {exc}")]
    for method in cfg.methods:
        rng = np.random.default_rng(seeds[1 + METHODS.index(method)])
        t0 = time.perf_counter()
        try:
            if method == "Oracle":
                khat = kstar
            elif method == "TrueK":
                khat = ds.k0
            else:
                khat, _ = select_rank(method, ds.Y, rng, cfg.selector, cfg.bcv)
            khat = int(khat)
            if khat not in losses:
                # outside the oracle grid: evaluate the loss directly
                losses = dict(losses)
                losses[khat] = loss_profile(ds.Y, ds.X, estimator, [khat])[khat]
            value = ree(khat, losses, kstar)
        except (EsaBcvError, ValueError, ArithmeticError) as exc:
            log.warning("cell %d replicate %d method %s: %s", cell, rep, method, exc)
            failures.append(Failure(cell, rep, method, f"{type(exc).__name__}: {exc}"))
            continue
        records.append(BenchmarkRecord(
            scenario=scenario.name, N=N, n=n, var_sigma2=var, replicate=rep, method=method,
            khat=khat, kstar=int(kstar), ree=float(value), err_x=float(losses[khat]),
            seed=seed, wall_time=time.perf_counter() - t0,
        ))
    return records, failures


def _tasks(cfg):
    for cell, scenario, size, var in cfg.cells():
        for rep in range(cfg.reps):
            yield cell, scenario, size, var, rep


def iter_benchmark(cfg: ExperimentConfig, threads: int = 1):
    """Yield ``(task, records, failures)`` per replicate in canonical order."""
    tasks = list(_tasks(cfg))
    if threads <= 1:
        for t in tasks:
            yield (t, *_replicate(cfg, t))
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for t, (recs, fails) in zip(tasks, pool.map(lambda t: _replicate(cfg, t), tasks)):
            yield t, recs, fails


def run_benchmark(cfg: ExperimentConfig, threads: int = 1) -> BenchmarkResult:
    """Run every method on every replicate of every cell.

    Failures are collected rather than raised. A cell counts as failed when
    none of its replicates produced a record.
    """
    records, failures = [], []
    produced = defaultdict(int)
    for task, recs, fails in iter_benchmark(cfg, threads):
        records.extend(recs)
        failures.extend(fails)
        produced[task[0]] += len(recs)
    failed = [cell for cell, *_ in cfg.cells() if produced[cell] == 0]
    return BenchmarkResult(records, failures, failed)


def _mean(xs):
    return float(np.mean(xs)) if len(xs) else math.nan


def summarize(records):
    """Mean REE and mean khat per ``(scenario, N, n, var_sigma2, method)``."""
    groups = {}
    for r in records:
        groups.setdefault((r.scenario, r.N, r.n, r.var_sigma2, r.method), []).append(r)
    rows = []
    for key, rs in groups.items():
        rows.append((*key, len(rs), _mean([r.ree for r in rs]), _mean([r.khat for r in rs])))
    return rows


SUMMARY_HEADER = ["scenario", "N", "n", "var_sigma2", "method", "count", "mean_ree", "mean_khat"]


def emit_tables(records, out_dir, timing: bool = False, thresholds=None):
    """Write ``records.csv``, ``summary.csv`` and ``survival.csv`` to ``out_dir``.

    The summary keeps first-appearance order of the groups, which for
    :func:`run_benchmark` output is the canonical cell order. Survival curves
    pool every record of a method.
    """
    records = list(records)
    if not records:
        raise InvalidInputError("no records to tabulate")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = lambda v: format_float(v) if isinstance(v, float) else str(v)  # noqa: E731
    write_rows(out / "records.csv", BenchmarkRecord.columns(timing),
               (r.row(timing) for r in records))
    write_rows(out / "summary.csv", SUMMARY_HEADER,
               ([fmt(v) for v in row] for row in summarize(records)))
    by_method = {}
    for r in records:
        by_method.setdefault(r.method, []).append(r.ree)
    surv = []
    for method, rees in by_method.items():
        t, prop = survival_curve(rees, thresholds)
        surv.extend([method, format_float(a), format_float(b)] for a, b in zip(t, prop))
    write_rows(out / "survival.csv", ["method", "threshold", "proportion"], surv)
    return out / "records.csv", out / "summary.csv", out / "survival.csv"


@dataclass(frozen=True)
class RealFit:
    fit: FactorFit
    curve: Optional[BcvCurve]
    row_means: np.ndarray
    row_labels: list
    col_labels: list


def fit_real(path, k: Optional[int] = None, center: bool = False, reps: int = PLOT_REPS,
             seed: Optional[int] = None, out=None, kmax: int = 16) -> RealFit:
    """Fit ESA to a matrix CSV, choosing the rank by BCV unless ``k`` is given.

    With ``center`` each row has its mean removed first; the fit describes the
    centred matrix and the removed means are returned. When ``out`` is set,
    ``signal.csv``, ``sigma.csv`` and (if BCV ran) ``bcv_curve.csv`` are
    written there.
    """
    values, row_labels, col_labels = read_matrix_csv(path)
    Y = as_data_matrix(values)
    means = Y.mean(axis=1) if center else np.zeros(Y.shape[0])
    if center:
        Y = Y - means[:, None]
    curve = None
    if k is None:
        rng = np.random.default_rng(seed)
        ks = default_ks(*Y.shape, kmax)
        curve = bcv_select(Y, ks, reps, rng)
        k = curve.khat
    fit = esa_fit(Y, int(k))
    if out is not None:
        o = Path(out)
        o.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(o / "signal.csv", fit.Xhat, row_labels, col_labels)
        write_rows(o / "sigma.csv", ["variable", "sigma2", "row_mean"],
                   ([lab, format_float(s), format_float(mu)]
                    for lab, s, mu in zip(row_labels, fit.Sigmahat, means)))
        if curve is not None:
            write_rows(o / "bcv_curve.csv", ["k", "pe_mean", "evaluated"],
                       ([str(kk), format_float(pm), str(c)]
                        for kk, pm, c in zip(curve.ks, curve.pe_mean, curve.evaluated)))
    return RealFit(fit, curve, means, row_labels, col_labels)


__all__ = [
    "METHODS", "BcvOptions", "ExperimentConfig", "BenchmarkResult", "Failure", "select_rank",
    "iter_benchmark", "run_benchmark", "summarize", "emit_tables", "RealFit", "fit_real",
]
