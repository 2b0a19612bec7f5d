"""Supervised probabilistic CP decomposition of multiway arrays."""

from .cp import CpFit, CPDecomposition, cp_als
from .model import (
    EStepResult,
    FitConfig,
    FitResult,
    NumericalError,
    SupCP,
    SupCpParams,
    conditional_mean,
    e_step,
    fit_supcp,
    identifiability_check,
    initialize,
    m_step_loadings,
    m_step_regression,
    marginal_loglik,
    normalize_params,
)
from .selection import RankSelectionReport, select_rank, test_loglik, train_test_split
from .simulation import (
    BenchmarkRow,
    SimTruth,
    generate_init_sim,
    generate_rank_sim,
    generate_setting,
    principal_angle,
    relative_errors,
    run_benchmark,
    run_init_study,
    signal_error,
)
from .tensor import (
    cp_compose,
    fold,
    frobenius_distance,
    k_rank,
    mttkrp,
    outer_product,
    unfold,
    vmat,
)

__version__ = "0.1.0"
