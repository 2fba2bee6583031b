"""Transfer learning for linear regression by gradient-descent fine-tuning.

The package fits ordinary least squares on a source and a target task,
fine-tunes the source estimate toward the target in closed form, computes the
exact transfer gain ``x^T H_k x``, and tests per observation whether
fine-tuning can be trusted over the target-only model.
"""

__version__ = "0.1.0"

from .core import Dataset, FittedModel, TaskTag, estimate_noise_variance, fit_ols, spd_inverse
from .decision import BatchDecision, RhoPrior, TestResult, batch_test, p_value, rho_kl_bound, test_statistic
from .errors import (
    ConstantSeries,
    CurveTooShort,
    DegenerateDirection,
    DimensionMismatch,
    DivergentStep,
    DomainError,
    EmptyInput,
    NonSPDGram,
    NoPositiveLabels,
    ParseError,
    RankDeficient,
    SchemaMismatch,
    TooFewSamples,
    TransferError,
    ZeroVector,
)
from .fdist import f_cdf, f_pdf, f_quantile, f_sf, reg_inc_beta
from .finetune import EigenDecomposition, TransferOperator, eigendecompose, fine_tune, make_transfer_operator
from .gain import GainReport, TaskTruth, gain_at, gain_bounds, gain_matrix, kl_decomposition, plug_in_truth
from .phases import PhaseConfig, PhaseGrid, run_phase_grid, simulate_cell
from .tuning import KRule, TuningReport, alpha_star, calibrate_rho, select_k, tune, u_bar_curve

__all__ = [
    "BatchDecision", "ConstantSeries", "CurveTooShort", "Dataset", "DegenerateDirection", "DimensionMismatch",
    "DivergentStep", "DomainError", "EigenDecomposition", "EmptyInput", "FittedModel", "GainReport", "KRule",
    "NoPositiveLabels", "NonSPDGram", "ParseError", "PhaseConfig", "PhaseGrid", "RankDeficient", "RhoPrior",
    "SchemaMismatch", "TaskTag", "TaskTruth", "TestResult", "TooFewSamples", "TransferError", "TransferOperator",
    "TuningReport", "ZeroVector", "alpha_star", "batch_test", "calibrate_rho", "eigendecompose",
    "estimate_noise_variance", "f_cdf", "f_pdf", "f_quantile", "f_sf", "fine_tune", "fit_ols", "gain_at",
    "gain_bounds", "gain_matrix", "kl_decomposition", "make_transfer_operator", "p_value", "plug_in_truth",
    "reg_inc_beta", "rho_kl_bound", "run_phase_grid", "select_k", "simulate_cell", "spd_inverse", "test_statistic",
    "tune", "u_bar_curve",
]
