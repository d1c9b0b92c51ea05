"""Desk-scale training loop: SGD with momentum over per-window gradients.

Window geometry never changes during training, so every sample's plan is
built once up front and reused each epoch. Updates run in a fixed order per
epoch (a seeded permutation), making checkpoints bit-reproducible for a
given (data, config, seed) triple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError, DivergenceDetected
from ..evaluation import snr_db_from_counts
from ..geometry import LevelSpec
from .model import (
    LcscHyperParams,
    ModelParams,
    WindowPlan,
    build_plan,
    forward_from_plan,
    loss_and_gradients,
)


@dataclass
class WindowSample:
    """One training unit: normalized points, bone flags, and truth labels."""

    points: np.ndarray  # (N, 4)
    bone: np.ndarray  # (N,) bool
    is_real: np.ndarray  # (N,) bool
    plan: Optional[WindowPlan] = field(default=None, repr=False)

    def ensure_plan(self, levels: list[LevelSpec]) -> WindowPlan:
        if self.plan is None:
            self.plan = build_plan(self.points, self.bone, levels)
        return self.plan


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    balanced: bool = True
    window_size: int = 4096
    clip_norm: float = 1.0  # global gradient-norm cap per step; 0 disables

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.clip_norm < 0:
            raise ConfigError(f"clip_norm must be >= 0, got {self.clip_norm}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_snr_db: float


def validation_snr(samples: Sequence[WindowSample], params: ModelParams) -> float:
    """SNR of the network's kept set over the validation windows."""
    m = n = 0
    for sample in samples:
        logits = forward_from_plan(sample.ensure_plan(params.levels), params)
        kept = logits > 0
        m += int(np.count_nonzero(kept & sample.is_real))
        n += int(np.count_nonzero(kept & ~sample.is_real))
    if m == 0 and n == 0:
        return -math.inf
    return snr_db_from_counts(m, n)


def train(
    samples: Sequence[WindowSample],
    val_samples: Sequence[WindowSample],
    levels: list[LevelSpec],
    config: TrainConfig,
    hyper: Optional[LcscHyperParams] = None,
    initial: Optional[ModelParams] = None,
) -> tuple[ModelParams, list[EpochStats]]:
    """Fit the window classifier; returns final params and per-epoch stats.

    Raises DivergenceDetected the moment a loss stops being finite. With
    ``lr == 0`` or ``epochs == 0`` the returned parameters equal the
    initialization.
    """
    if not samples:
        raise ConfigError("training set is empty")
    hyper = hyper or LcscHyperParams()
    if initial is not None:
        params = initial.copy()
    else:
        params = ModelParams.initialize(
            levels, hyper, seed=config.seed, window_size=config.window_size
        )
    for sample in samples:
        sample.ensure_plan(params.levels)

    rng = np.random.Generator(np.random.Philox(key=np.uint64(config.seed)))
    velocity = {k: np.zeros_like(v) for k, v in params.blocks.items()}
    history: list[EpochStats] = []
    soft_names = [k for k in params.blocks if k.endswith(".soft")]

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(samples))
        total = 0.0
        for idx in order:
            sample = samples[int(idx)]
            loss, grads, _ = loss_and_gradients(
                sample.plan, params, sample.is_real, balanced=config.balanced
            )
            if not math.isfinite(loss):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}")
            if config.clip_norm > 0:
                norm = math.sqrt(
                    sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())
                )
                if norm > config.clip_norm:
                    scale = config.clip_norm / norm
                    for g in grads.values():
                        g *= scale
            for name, grad in grads.items():
                vel = velocity[name]
                vel *= config.momentum
                vel += grad
                params.blocks[name] -= config.lr * vel
            for name in soft_names:
                np.maximum(params.blocks[name], 0.0, out=params.blocks[name])
            total += loss
        val = validation_snr(val_samples, params) if val_samples else math.nan
        history.append(EpochStats(epoch=epoch, train_loss=total / len(samples), val_snr_db=val))
    return params, history
