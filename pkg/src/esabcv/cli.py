"""Command line entry point: ``esabcv {simulate,select,fit,benchmark}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .exceptions import EsaBcvError
from .harness import (
    METHODS,
    SELECTORS,
    BcvOptions,
    ExperimentConfig,
    emit_tables,
    fit_real,
    run_benchmark,
    select_rank,
)
from .io import read_matrix_csv, write_rows
from .rank_selectors import SelectorConfig
from .simgen import NoiseSpec, ScenarioSpec, generate_dataset

log = logging.getLogger("esabcv")


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _parser():
    p = argparse.ArgumentParser(prog="esabcv", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a simulated dataset (CSV + JSON sidecar)")
    s.add_argument("--scenario", default="Type-1", help="preset name, e.g. Type-3")
    s.add_argument("--N", type=int, default=100)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--noise-var", type=float, default=1.0)
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--out", default=".")
    s.add_argument("--stem", default="dataset")

    s = sub.add_parser("select", help="choose the number of factors of a matrix CSV")
    s.add_argument("path")
    s.add_argument("--method", default="BCV", choices=SELECTORS)
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--reps", type=_positive, default=50, help="BCV replicates")
    s.add_argument("--kmax", type=_positive, default=16)
    s.add_argument("--center", action="store_true")

    s = sub.add_parser("fit", help="ESA fit of a matrix CSV, rank by BCV unless --k")
    s.add_argument("path")
    s.add_argument("--k", type=int)
    s.add_argument("--center", action="store_true")
    s.add_argument("--reps", type=_positive, default=200)
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--out", default="fit")

    s = sub.add_parser("benchmark", help="run a simulation study from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=_u64, help="override master_seed")
    s.add_argument("--reps", type=_positive, help="override replicates per cell")
    s.add_argument("--method", action="append", choices=METHODS,
                   help="restrict to this method (repeatable)")
    s.add_argument("--threads", type=_positive, default=1)
    s.add_argument("--out", default="results")
    s.add_argument("--timing", action="store_true", help="include wall_time in records.csv")
    return p


def _cmd_simulate(a):
    ds = generate_dataset(a.seed, ScenarioSpec.preset(a.scenario), a.N, a.n, NoiseSpec(a.noise_var))
    csv_path, json_path = ds.export(a.out, a.stem)
    print(f"wrote {csv_path} and {json_path} (k0={ds.k0})")
    return 0


def _fmt_detail(v):
    if isinstance(v, np.ndarray):
        return np.array2string(v, precision=4, max_line_width=100)
    return str(v)


def _cmd_select(a):
    Y, _, _ = read_matrix_csv(a.path)
    if a.center:
        Y = Y - Y.mean(axis=1, keepdims=True)
    khat, details = select_rank(a.method, Y, np.random.default_rng(a.seed),
                                SelectorConfig(kmax=a.kmax), BcvOptions(a.reps, a.kmax))
    print(f"method {a.method}")
    print(f"khat {khat}")
    for key, v in details.items():
        print(f"{key} {_fmt_detail(v)}")
    return 0


def _cmd_fit(a):
    res = fit_real(a.path, k=a.k, center=a.center, reps=a.reps, seed=a.seed, out=a.out)
    print(f"k {res.fit.k}")
    print(f"m {res.fit.m}")
    if res.curve is not None:
        print(f"pe_mean {_fmt_detail(res.curve.pe_mean)}")
    print(f"wrote {a.out}")
    return 0


def _cmd_benchmark(a):
    raw = json.loads(Path(a.config).read_text())
    if a.seed is not None:
        raw["master_seed"] = a.seed
    if a.reps is not None:
        raw["reps"] = a.reps
    if a.method:
        raw["methods"] = a.method
    cfg = ExperimentConfig.from_dict(raw)
    result = run_benchmark(cfg, threads=a.threads)
    if result.failures:
        Path(a.out).mkdir(parents=True, exist_ok=True)
        write_rows(Path(a.out) / "failures.csv", ["cell", "replicate", "method", "error"],
                   ([f.cell, f.replicate, f.method or "", f.error] for f in result.failures))
    if result.records:
        paths = emit_tables(result.records, a.out, timing=a.timing)
        print("wrote " + ", ".join(str(p) for p in paths))
    print(f"{len(result.records)} records, {len(result.failures)} failures")
    if result.failed_cells:
        print(f"cells with no results: {result.failed_cells}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "select": _cmd_select,
    "fit": _cmd_fit,
    "benchmark": _cmd_benchmark,
}


def main(argv=None) -> int:
    a = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except (EsaBcvError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
