"""Residual feature extractor, LSTM contextual extractor and task heads."""

from .checkpoint import (
    IncompatibleCheckpointError,
    build_model,
    load_checkpoint,
    read_manifest,
    save_checkpoint,
)
from .config import HeadKind, InitStrategy, LstmConfig, ResNetConfig
from .network import (
    Model,
    bottleneck_forward,
    extract_features,
    head_forward,
    is_extractor_param,
    layer_group,
    lstm_cell,
    lstm_forward,
    xavier_bound,
)

__all__ = [
    "HeadKind",
    "IncompatibleCheckpointError",
    "InitStrategy",
    "LstmConfig",
    "Model",
    "ResNetConfig",
    "bottleneck_forward",
    "build_model",
    "extract_features",
    "head_forward",
    "is_extractor_param",
    "layer_group",
    "load_checkpoint",
    "lstm_cell",
    "lstm_forward",
    "read_manifest",
    "save_checkpoint",
    "xavier_bound",
]
