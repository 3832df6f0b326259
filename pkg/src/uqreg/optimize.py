"""Adam optimizer, plateau learning-rate schedule, and the epoch loop.

Recipe: Adam at initial learning rate 1e-3; the rate is multiplied by 0.9
whenever the validation loss has not improved for 3 consecutive epochs
(strict less-than improvement), floored at 1e-5; up to 100 epochs of 128
batches x 32 samples each, drawn uniformly with replacement from the train
split; the returned parameters are those of the best-validation epoch.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses, network
from .data import Dataset

logger = logging.getLogger(__name__)

# Epoch sample count is batches_per_epoch * batch_size regardless of the
# train-split size, hence sampling with replacement.
IMPROVEMENT_RULE = "strict_less_than"


class OptimizationError(RuntimeError):
    """Raised when a run becomes numerically unusable (non-finite values)."""


@dataclass
class AdamState:
    """Per-parameter moment estimates; arrays parallel params.arrays()."""

    step_count: int
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_parameters(cls, params: network.NetworkParameters) -> "AdamState":
        arrays = params.arrays()
        return cls(
            step_count=0,
            first_moment=[np.zeros_like(a) for a in arrays],
            second_moment=[np.zeros_like(a) for a in arrays],
        )


def adam_step(params: network.NetworkParameters, gradients: network.Gradients,
              state: AdamState, lr: float):
    """One bias-corrected Adam update, in place; returns (params, state)."""
    p_arrays = params.arrays()
    g_arrays = gradients.arrays()
    if len(p_arrays) != len(g_arrays) or any(
        p.shape != g.shape for p, g in zip(p_arrays, g_arrays)
    ):
        raise ValueError("gradient shapes do not match parameters")
    for i, g in enumerate(g_arrays):
        if not np.all(np.isfinite(g)):
            raise OptimizationError(
                f"non-finite gradient in parameter array {i} at step "
                f"{state.step_count + 1}"
            )
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(p_arrays, g_arrays, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g**2
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 1e-3
    lr_factor: float = 0.9
    patience_epochs: int = 3
    min_lr: float = 1e-5
    max_epochs: int = 100
    batches_per_epoch: int = 128
    batch_size: int = 32
    seed: int = 41
    loss_kind: str = losses.LOSS_NLL
    affect_dimension: str = "valence"
    hidden_sizes: tuple[int, ...] = (128, 128)
    dropout_rate: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 < self.lr_factor < 1.0):
            raise ValueError(f"lr_factor must be in (0, 1), got {self.lr_factor}")
        if self.min_lr > self.initial_lr:
            raise ValueError("min_lr must not exceed initial_lr")
        for name in ("patience_epochs", "batches_per_epoch", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be nonnegative")
        if self.loss_kind not in losses.LOSS_KINDS:
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.affect_dimension not in ("valence", "arousal"):
            raise ValueError(f"unknown affect_dimension {self.affect_dimension!r}")

    @property
    def head_mode(self) -> str:
        return losses.head_mode_for(self.loss_kind)


def plateau_schedule(history, current_lr: float, config: TrainConfig) -> float:
    """Learning rate after observing the given validation-loss history.

    Replays the no-improvement counter over the history (strict less-than
    improvement resets it, as does a rate drop) and applies one multiplier
    if the counter reaches the patience at the final epoch. The result
    never falls below config.min_lr.
    """
    history = list(history)
    if not history:
        raise ValueError("plateau_schedule needs a nonempty history")
    best = math.inf
    wait = 0
    fired = False
    for loss in history:
        fired = False
        if loss < best:
            best = loss
            wait = 0
        else:
            wait += 1
            if wait >= config.patience_epochs:
                fired = True
                wait = 0
    if fired:
        return max(current_lr * config.lr_factor, config.min_lr)
    return current_lr


@dataclass
class TrainReport:
    """Per-epoch curves plus the provenance needed to reproduce a run."""

    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    seed: int | None = None
    loss_kind: str | None = None
    affect_dimension: str | None = None
    improvement_rule: str = IMPROVEMENT_RULE
    checkpoint_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "learning_rates": self.learning_rates,
            "best_epoch": self.best_epoch,
            "seed": self.seed,
            "loss_kind": self.loss_kind,
            "affect_dimension": self.affect_dimension,
            "improvement_rule": self.improvement_rule,
            "checkpoint_path": self.checkpoint_path,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "TrainReport":
        return cls(**record)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def validation_loss(params: network.NetworkParameters, X, mu, sigma,
                    loss_kind: str) -> float:
    """Eval-mode (no dropout) mean loss over a whole split."""
    prediction, _ = network.forward(params, X, mode=network.MODE_EVAL)
    return losses.batch_loss(loss_kind, prediction, mu, sigma).value


def train(dataset: Dataset, config: TrainConfig):
    """Run the full recipe on one affect dimension.

    Returns (best-epoch NetworkParameters, TrainReport). Fully determined,
    bit for bit, by (dataset, config) on one platform.
    """
    _, X_train, mu_train, sigma_train = dataset.matrices("train", config.affect_dimension)
    _, X_val, mu_val, sigma_val = dataset.matrices("val", config.affect_dimension)
    if X_train.shape[0] == 0 or X_val.shape[0] == 0:
        raise ValueError("train and val splits must be nonempty")

    params = network.init_parameters(
        dataset.feature_dim, config.hidden_sizes, config.head_mode,
        seed=config.seed, dropout_rate=config.dropout_rate,
    )
    state = AdamState.for_parameters(params)
    # Separate stream for batch sampling and dropout masks so that init and
    # training draws never alias.
    rng = np.random.default_rng([config.seed, 1])

    report = TrainReport(
        seed=config.seed,
        loss_kind=config.loss_kind,
        affect_dimension=config.affect_dimension,
    )
    best_params = params.copy()
    best_val = math.inf
    lr = config.initial_lr
    n_train = X_train.shape[0]

    for epoch in range(config.max_epochs):
        epoch_losses = np.empty(config.batches_per_epoch)
        for b in range(config.batches_per_epoch):
            idx = rng.integers(0, n_train, size=config.batch_size)
            prediction, tape = network.forward(
                params, X_train[idx], mode=network.MODE_TRAIN, rng=rng
            )
            batch = losses.batch_loss(
                config.loss_kind, prediction, mu_train[idx], sigma_train[idx]
            )
            if not math.isfinite(batch.value):
                raise OptimizationError(
                    f"non-finite training loss at epoch {epoch}, batch {b}"
                )
            grads = network.backward(params, tape, batch.d_mu_logit, batch.d_sigma_logit)
            adam_step(params, grads, state, lr)
            epoch_losses[b] = batch.value

        val = validation_loss(params, X_val, mu_val, sigma_val, config.loss_kind)
        if not math.isfinite(val):
            raise OptimizationError(f"non-finite validation loss at epoch {epoch}")
        report.train_losses.append(float(epoch_losses.mean()))
        report.val_losses.append(val)
        report.learning_rates.append(lr)
        if val < best_val:
            best_val = val
            best_params = params.copy()
            report.best_epoch = epoch
        lr = plateau_schedule(report.val_losses, lr, config)

    logger.info(
        "trained %s/%s seed %d: best epoch %s, best val loss %s",
        config.loss_kind, config.affect_dimension, config.seed,
        report.best_epoch, None if report.best_epoch is None else best_val,
    )
    return best_params, report


def train_config_from_mapping(mapping: dict) -> TrainConfig:
    """Build a TrainConfig from config-file keys, applying defaults."""
    kwargs = {}
    for f in TrainConfig.__dataclass_fields__:
        if f in mapping:
            kwargs[f] = mapping[f]
    if "hidden_sizes" in kwargs:
        kwargs["hidden_sizes"] = tuple(int(h) for h in kwargs["hidden_sizes"])
    return TrainConfig(**kwargs)


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
