from .checkpoint import CheckpointError, load_model, save_model
from .nets import AttentionModel, InstanceModel, ParamModel, softmax
from .oracle import OracleModel
from .training import (
    MODEL_KINDS,
    TrainConfig,
    TrainingError,
    TrainLog,
    accuracy,
    build_model,
    gradient_check,
    inherent_attributions,
    train,
)

__all__ = [
    "AttentionModel",
    "CheckpointError",
    "InstanceModel",
    "MODEL_KINDS",
    "OracleModel",
    "ParamModel",
    "TrainConfig",
    "TrainLog",
    "TrainingError",
    "accuracy",
    "build_model",
    "gradient_check",
    "inherent_attributions",
    "load_model",
    "save_model",
    "softmax",
    "train",
]
