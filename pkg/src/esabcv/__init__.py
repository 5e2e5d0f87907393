"""Factor analysis under heteroscedastic noise.

Early-stopping alternation (:func:`esa_fit`) estimates the signal for a given
rank, bi-cross-validation (:func:`bcv_select`) chooses the rank, and the
``simgen`` / ``metrics`` / ``harness`` modules benchmark it against classical
rank selectors on simulated data.
"""

from .bcv import BcvCurve, bcv_fit, bcv_select, holdout_fraction, partition_sizes, predict_heldout
from .esa import EsaEstimator, FactorFit, SvdEstimator, esa_fit, esa_fit_path, init_sigma, log_likelihood
from .exceptions import (
    CsvParseError,
    DegenerateFactorizationError,
    DegenerateFitError,
    DegenerateVariableError,
    DegenerateVarianceError,
    EsaBcvError,
    InvalidInputError,
    InvalidRankError,
    NoFeasibleRankError,
    StrengthCollisionError,
    VarianceCollapseError,
)
from .harness import ExperimentConfig, emit_tables, fit_real, run_benchmark, select_rank
from .matops import pinv_factored, reconstruct, sample_spectrum, stiefel_uniform, svd, truncate
from .metrics import (
    BenchmarkRecord,
    baseline_estimate,
    early_stopping_profile,
    err_x,
    oracle_rank,
    ree,
    survival_curve,
    true_pe,
)
from .rank_selectors import SelectorConfig, ed_select, er_select, ic1_select, ne_select, pa_select
from .simgen import SCENARIOS, GeneratedDataset, NoiseSpec, ScenarioSpec, generate_dataset

__version__ = "0.1.0"
