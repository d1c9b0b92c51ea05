"""Learnable window classifier: layers, model assembly, checkpoints, training."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    ConvParams,
    LevelView,
    bce_with_logits,
    lcsc_block,
    loss_bce,
    set_debug_checks,
    sfe_forward,
    soft_threshold,
    ssfe_forward,
    sum_pool,
)
from .model import (
    DESK_LEVELS,
    FULL_LEVELS,
    TINY_LEVELS,
    LcscHyperParams,
    ModelParams,
    WindowPlan,
    build_plan,
    expected_shapes,
    feature_propagation_level,
    forward_from_plan,
    loss_and_gradients,
    set_abstraction_level,
    wednet_forward,
)
from .train import EpochStats, TrainConfig, WindowSample, train, validation_snr

__all__ = [
    "ConvParams",
    "LevelView",
    "bce_with_logits",
    "lcsc_block",
    "loss_bce",
    "set_debug_checks",
    "sfe_forward",
    "soft_threshold",
    "ssfe_forward",
    "sum_pool",
    "DESK_LEVELS",
    "FULL_LEVELS",
    "TINY_LEVELS",
    "LcscHyperParams",
    "ModelParams",
    "WindowPlan",
    "build_plan",
    "expected_shapes",
    "feature_propagation_level",
    "forward_from_plan",
    "loss_and_gradients",
    "set_abstraction_level",
    "wednet_forward",
    "load_checkpoint",
    "save_checkpoint",
    "EpochStats",
    "TrainConfig",
    "WindowSample",
    "train",
    "validation_snr",
]
