"""Training loop: masked MSE objective, Adam, LR plateau scheduling, early stop.

Training is full batch — one optimizer step per window per epoch, windows in
chronological order — which matches the scale of a few yearly snapshots.
Validation loss is monitored every epoch; the returned parameters are the
ones from the best-validation epoch (argmin checkpointing).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .dataset import TemporalSample
from .graph import RoadGraph, build_message_layout
from .model import ModelConfig, ModelParams, forward, init_params


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    max_epochs: int = 200
    scheduler_factor: float = 0.5
    scheduler_patience: int = 8
    early_stop_patience: int = 25
    improvement_rel_threshold: float = 1e-4
    decoupled_weight_decay: bool = False
    seed: int = 0
    t0: int = 2

    def __post_init__(self):
        if self.learning_rate <= 0 or self.scheduler_factor <= 0:
            raise ValueError("rates must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")
        if self.scheduler_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patiences must be >= 1")
        if self.max_epochs < 1 or self.t0 < 1:
            raise ValueError("max_epochs and t0 must be >= 1")


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """Mean squared error over the masked node subset."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.int64)
    if pred.shape != target.shape:
        raise ValueError(f"pred shape {pred.shape} != target shape {target.shape}")
    if mask.size == 0:
        raise ValueError("empty node mask")
    diff = pred[mask] - target[mask]
    return float(np.mean(diff * diff))


def _masked_mse_t(pred: ad.Tensor, target: np.ndarray, mask: np.ndarray) -> ad.Tensor:
    if mask.size == 0:
        raise ValueError("empty node mask")
    diff = ad.sub(ad.gather_rows(pred, mask), ad.constant(target[mask]))
    return ad.tensor_mean(ad.mul(diff, diff))


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    decoupled: bool = False,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied in place.

    Weight decay defaults to the classic L2 form (lambda * theta added to the
    gradient before the moment updates); ``decoupled`` subtracts
    ``lr * lambda * theta`` directly instead.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} ({name})")
        if weight_decay > 0.0 and not decoupled:
            g = g + weight_decay * p
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if weight_decay > 0.0 and decoupled:
            update = update + weight_decay * p
        p -= lr * update
    return params, state


class PlateauTracker:
    """Consecutive non-improvement bookkeeping for the scheduler and stopper.

    An epoch improves when its value drops below best * (1 - rel_threshold).
    ``update`` returns (improved, reduce_lr, stop): the LR reduction fires on
    every ``scheduler_patience``-th consecutive bad epoch (once per window),
    the stop signal on the ``early_stop_patience``-th.
    """

    def __init__(self, scheduler_patience: int, early_stop_patience: int, rel_threshold: float):
        self.scheduler_patience = scheduler_patience
        self.early_stop_patience = early_stop_patience
        self.rel_threshold = rel_threshold
        self.best = np.inf
        self.bad_epochs = 0
        self.sched_bad = 0

    def update(self, value: float) -> tuple[bool, bool, bool]:
        if value < self.best * (1.0 - self.rel_threshold):
            self.best = value
            self.bad_epochs = 0
            self.sched_bad = 0
            return True, False, False
        self.bad_epochs += 1
        self.sched_bad += 1
        reduce_lr = self.sched_bad >= self.scheduler_patience
        if reduce_lr:
            self.sched_bad = 0
        return False, reduce_lr, self.bad_epochs >= self.early_stop_patience


@dataclass
class TrainReport:
    """Per-epoch trace plus the stopping summary."""

    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = np.inf
    stopping_reason: str = ""

    @property
    def epochs_run(self) -> int:
        return len(self.val_losses)

    def to_dict(self) -> dict:
        return {
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "learning_rates": self.learning_rates,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "stopping_reason": self.stopping_reason,
            "epochs_run": self.epochs_run,
        }


def train(
    variant: str,
    train_samples: Sequence[TemporalSample],
    val_samples: Sequence[TemporalSample],
    graph: RoadGraph | None,
    config: TrainConfig = TrainConfig(),
    model_config: ModelConfig = ModelConfig(),
    train_mask: np.ndarray | None = None,
) -> tuple[ModelParams, TrainReport]:
    """Fit a model variant on standardized windows.

    ``train_samples``/``val_samples`` must already be standardized. The loss
    is computed over ``train_mask`` nodes (all nodes by default); validation
    loss is the masked MSE over all nodes of every validation window.
    Gradients only ever flow from training windows.
    """
    if not train_samples:
        raise TrainingError("no training samples")
    if not val_samples:
        raise TrainingError("no validation samples")
    n = train_samples[0].num_nodes
    f_in = train_samples[0].inputs.shape[2]
    t0 = train_samples[0].t0
    layout = build_message_layout(graph) if graph is not None else None

    params = init_params(variant, f_in, t0, model_config, seed=config.seed)
    tensors = params.tensor_dict()
    state = AdamState.for_params(tensors)
    mask = np.arange(n) if train_mask is None else np.asarray(train_mask, dtype=np.int64)
    all_nodes = np.arange(n)
    rng = np.random.default_rng(config.seed + 1) if model_config.dropout > 0 else None

    tracker = PlateauTracker(
        config.scheduler_patience, config.early_stop_patience, config.improvement_rel_threshold
    )
    report = TrainReport()
    lr = config.learning_rate
    best_tensors = params.copy_tensors()
    stopping = "max_epochs"

    for epoch in range(config.max_epochs):
        epoch_losses = []
        for sample in train_samples:
            pred, leaves = forward(params, sample.inputs, layout, rng=rng)
            loss = _masked_mse_t(pred, sample.target, mask)
            if not np.isfinite(loss.value):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch} "
                    f"(target year {sample.target_year}); aborting"
                )
            ad.backward(loss)
            grads = {name: leaf.grad for name, leaf in leaves.items()}
            adam_step(
                tensors,
                grads,
                state,
                lr,
                config.weight_decay,
                decoupled=config.decoupled_weight_decay,
            )
            epoch_losses.append(float(loss.value))

        val_loss = float(
            np.mean(
                [
                    masked_mse(predict_standardized(params, s, layout), s.target, all_nodes)
                    for s in val_samples
                ]
            )
        )
        report.train_losses.append(float(np.mean(epoch_losses)))
        report.val_losses.append(val_loss)
        report.learning_rates.append(lr)

        # Argmin checkpointing is independent of the plateau threshold.
        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_tensors = params.copy_tensors()

        _, reduce_lr, stop = tracker.update(val_loss)
        if reduce_lr:
            lr *= config.scheduler_factor
        if stop:
            stopping = "early_stop"
            break

    report.stopping_reason = stopping
    params.set_tensors(best_tensors)
    return params, report


def predict_standardized(params: ModelParams, sample: TemporalSample, layout) -> np.ndarray:
    """Eval-mode forward pass returning the standardized (N,) prediction."""
    pred, _ = forward(params, sample.inputs, layout, rng=None)
    return pred.value
