"""From-scratch neural network stack: layers with exact backprop, Adam,
masked cross-entropy, CRNN/baseline builders and the training loop."""

from .layers import (
    ACTIVATIONS,
    BatchNorm,
    BiGRU,
    Conv2D,
    Dropout,
    FlattenFreq,
    Layer,
    MaxPoolFreq,
    TimeDense,
    sigmoid,
)
from .loss import bce_loss
from .model import (
    CrnnArch,
    ModelGraph,
    build_baseline_mlp,
    build_crnn,
    load_checkpoint,
    mbe_context_windows,
    pool_plan,
    save_checkpoint,
    validate_pools,
)
from .optim import Adam, adam_step
from .training import TrainConfig, TrainHistory, monitor_scores, predict_rolls, predict_sequences, train

__all__ = [
    "ACTIVATIONS",
    "Adam",
    "BatchNorm",
    "BiGRU",
    "Conv2D",
    "CrnnArch",
    "Dropout",
    "FlattenFreq",
    "Layer",
    "MaxPoolFreq",
    "ModelGraph",
    "TimeDense",
    "TrainConfig",
    "TrainHistory",
    "adam_step",
    "bce_loss",
    "build_baseline_mlp",
    "build_crnn",
    "load_checkpoint",
    "mbe_context_windows",
    "monitor_scores",
    "pool_plan",
    "predict_rolls",
    "predict_sequences",
    "save_checkpoint",
    "sigmoid",
    "train",
    "validate_pools",
]
