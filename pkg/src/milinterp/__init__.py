"""Model-agnostic interpretability for multiple instance learning."""

from .core import (
    AttributionMatrix,
    Bag,
    BagClassifier,
    CachedEvaluator,
    ContractViolation,
    EmptyCoalitionError,
    MethodInapplicableError,
    MetricUnavailableError,
    MILError,
)
from .metrics import aopc, aopc_r, evaluate_method, ndcg_at_n, relevance_view
from .pointwise import combined_attribution, one_removed_attribution, single_attribution
from .surrogate import lime_explain, milli_explain, shap_explain

__version__ = "0.1.0"

__all__ = [
    "AttributionMatrix",
    "Bag",
    "BagClassifier",
    "CachedEvaluator",
    "ContractViolation",
    "EmptyCoalitionError",
    "MILError",
    "MethodInapplicableError",
    "MetricUnavailableError",
    "aopc",
    "aopc_r",
    "combined_attribution",
    "evaluate_method",
    "lime_explain",
    "milli_explain",
    "ndcg_at_n",
    "one_removed_attribution",
    "relevance_view",
    "shap_explain",
    "single_attribution",
]
