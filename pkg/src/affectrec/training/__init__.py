"""Optimizer, training loops, evaluation and the initialisation comparison harness."""

from .adam import Adam, AdamState, NonFiniteGradientError, adam_step
from .compare import Comparison, StrategyRow, compare_initialisations
from .config import EpochRecord, HyperParams, TrainReport
from .loops import (
    Predictions,
    architecture,
    balanced_accuracy,
    evaluate,
    finetune_dimensional,
    mean_ccc,
    predict,
    pretrain_categorical,
    run_epochs,
    train_model,
)

__all__ = [
    "Adam",
    "AdamState",
    "Comparison",
    "EpochRecord",
    "HyperParams",
    "NonFiniteGradientError",
    "Predictions",
    "StrategyRow",
    "TrainReport",
    "adam_step",
    "architecture",
    "balanced_accuracy",
    "compare_initialisations",
    "evaluate",
    "finetune_dimensional",
    "mean_ccc",
    "predict",
    "pretrain_categorical",
    "run_epochs",
    "train_model",
]
