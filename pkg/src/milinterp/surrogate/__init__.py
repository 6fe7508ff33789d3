from .explain import lime_explain, milli_explain, rank_by_single, shap_explain, surrogate_explain
from .fit import RIDGE, DegenerateSampleError, SurrogateFit, fit_all_classes, fit_surrogate, solve_weighted
from .kernels import (
    SHAP_FULL_WEIGHT,
    KernelParameterError,
    KernelSpec,
    beta_hat,
    coalition_size_mean,
    default_lime_width,
    expected_coalition_size,
    lime_kernel,
    milli_kernel,
    pi_r,
    shap_kernel,
)
from .sampling import BudgetError, RepeatedCoalitionWarning, SamplerSpec, guided_order, sample_coalitions

__all__ = [
    "BudgetError",
    "DegenerateSampleError",
    "KernelParameterError",
    "KernelSpec",
    "RIDGE",
    "RepeatedCoalitionWarning",
    "SHAP_FULL_WEIGHT",
    "SamplerSpec",
    "SurrogateFit",
    "beta_hat",
    "coalition_size_mean",
    "default_lime_width",
    "expected_coalition_size",
    "fit_all_classes",
    "fit_surrogate",
    "guided_order",
    "lime_explain",
    "lime_kernel",
    "milli_explain",
    "milli_kernel",
    "pi_r",
    "rank_by_single",
    "sample_coalitions",
    "shap_explain",
    "shap_kernel",
    "solve_weighted",
    "surrogate_explain",
]
