"""Parametric convolutional classifier trained from scratch with numpy."""

from .augment import AugmentParams, augment, augment_batch
from .layers import weighted_cross_entropy
from .model import (
    DESK,
    PAPER,
    ArchitectureError,
    CapExceededError,
    NetSpec,
    Network,
    Preset,
    SpatialCollapseError,
    TrainedNet,
    build,
    init_params,
    predict_proba,
)
from .train import SGD, TrainParams, evaluate, train

__all__ = [
    "AugmentParams",
    "ArchitectureError",
    "CapExceededError",
    "DESK",
    "NetSpec",
    "Network",
    "PAPER",
    "Preset",
    "SGD",
    "SpatialCollapseError",
    "TrainParams",
    "TrainedNet",
    "augment",
    "augment_batch",
    "build",
    "evaluate",
    "init_params",
    "predict_proba",
    "train",
    "weighted_cross_entropy",
]
