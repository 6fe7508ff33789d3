from .config import (
    GENERATORS,
    METHOD_NAMES,
    MILLI_DEFAULTS,
    MODEL_NAMES,
    DatasetSpec,
    ExperimentConfig,
    MethodSpec,
    config_from_dict,
    derive_seed,
    load_config,
)
from .experiment import CellResult, ReportTable, make_dataset, read_results, run_experiment
from .search import GridResult, SweepResult, best_point, grid_search_alpha_beta, sweep_sample_size

__all__ = [
    "CellResult",
    "DatasetSpec",
    "ExperimentConfig",
    "GENERATORS",
    "GridResult",
    "METHOD_NAMES",
    "MILLI_DEFAULTS",
    "MODEL_NAMES",
    "MethodSpec",
    "ReportTable",
    "SweepResult",
    "best_point",
    "config_from_dict",
    "derive_seed",
    "grid_search_alpha_beta",
    "load_config",
    "make_dataset",
    "read_results",
    "run_experiment",
    "sweep_sample_size",
]
