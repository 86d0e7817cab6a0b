"""Training loop components: Adam, early stopping, the epoch loop.

Early stopping follows the two-metric rule: patience resets whenever
validation accuracy exceeds its best *or* validation loss drops below its
best; the parameter snapshot tracks the best accuracy (ties broken by
lower loss) and is restored when training stops.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .neural import Model, check_finite_gradients, predict_labels
from .propagation import PropagationCache

__all__ = [
    "AdamState",
    "TrainState",
    "adam_step",
    "early_stopping_update",
    "train_model",
    "TrainHistory",
]

MAX_EPOCHS = 10_000
PATIENCE = 100


@dataclass
class AdamState:
    """First/second moment buffers plus the shared timestep."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[tuple[str, np.ndarray]]) -> "AdamState":
        return cls(m={n: np.zeros_like(p) for n, p in params},
                   v={n: np.zeros_like(p) for n, p in params})


@dataclass
class TrainState:
    params: list[tuple[str, np.ndarray]]
    adam: AdamState
    epoch: int = 0
    patience_counter: int = 0
    best_val_acc: float = -np.inf
    best_val_loss: float = np.inf
    snapshot: dict[str, np.ndarray] = field(default_factory=dict)
    snapshot_val_loss: float = np.inf
    snapshot_epoch: int = 0

    @classmethod
    def for_model(cls, model: Model) -> "TrainState":
        params = model.params()
        return cls(params=params, adam=AdamState.for_params(params))

    def take_snapshot(self) -> None:
        self.snapshot = {n: p.copy() for n, p in self.params}
        self.snapshot_epoch = self.epoch

    def restore_snapshot(self) -> None:
        if self.snapshot:
            for name, p in self.params:
                np.copyto(p, self.snapshot[name])


def adam_step(state: TrainState, gradients: dict[str, np.ndarray], lr: float) -> TrainState:
    """Standard bias-corrected Adam update, in place."""
    check_finite_gradients(gradients)
    a = state.adam
    a.t += 1
    bc1 = 1.0 - a.beta1 ** a.t
    bc2 = 1.0 - a.beta2 ** a.t
    for name, p in state.params:
        g = gradients[name]
        if g.shape != p.shape:
            raise DomainError(f"gradient shape mismatch for {name}")
        a.m[name] = a.beta1 * a.m[name] + (1.0 - a.beta1) * g
        a.v[name] = a.beta2 * a.v[name] + (1.0 - a.beta2) * g * g
        m_hat = a.m[name] / bc1
        v_hat = a.v[name] / bc2
        p -= lr * m_hat / (np.sqrt(v_hat) + a.eps)
    return state


def early_stopping_update(state: TrainState, val_acc: float,
                          val_loss: float) -> tuple[TrainState, bool]:
    """Apply one epoch's validation metrics; returns (state, stop).

    Must be called once per epoch after ``state.epoch`` is advanced. On
    stop the best snapshot is restored into the live parameters.
    """
    improved_acc = val_acc > state.best_val_acc
    improved_loss = val_loss < state.best_val_loss
    if improved_acc or (val_acc == state.best_val_acc and val_loss < state.snapshot_val_loss):
        state.take_snapshot()
        state.snapshot_val_loss = val_loss
    if improved_acc:
        state.best_val_acc = val_acc
    if improved_loss:
        state.best_val_loss = val_loss
    if improved_acc or improved_loss:
        state.patience_counter = 0
    else:
        state.patience_counter += 1
    stop = state.patience_counter >= PATIENCE or state.epoch >= MAX_EPOCHS
    if stop:
        state.restore_snapshot()
    return state, stop


@dataclass
class TrainHistory:
    epochs_run: int
    best_val_acc: float
    epoch_seconds: list[float]
    stopped_early: bool

    @property
    def mean_epoch_seconds(self) -> float:
        return float(np.mean(self.epoch_seconds)) if self.epoch_seconds else 0.0


def train_model(model: Model, x: np.ndarray, labels: np.ndarray,
                train_idx: np.ndarray, val_idx: np.ndarray,
                rng: np.random.Generator,
                max_epochs: int = MAX_EPOCHS,
                cache: PropagationCache | None = None) -> TrainHistory:
    """Full-batch training with Adam and two-metric early stopping.

    The cacheable variants reuse one propagated-feature cache across all
    epochs; wall-clock per epoch covers forward, backward, update and
    validation, not matrix precomputation.
    """
    if cache is None and model.spec.cacheable:
        cache = PropagationCache()
    state = TrainState.for_model(model)
    epoch_seconds: list[float] = []
    stopped = False
    for epoch in range(1, max_epochs + 1):
        started = time.perf_counter()
        state.epoch = epoch
        fwd = model.forward(x, mode="train", rng=rng, cache=cache)
        _loss, grads = model.loss_and_gradients(fwd, labels, train_idx)
        adam_step(state, grads, model.spec.learning_rate)

        ev = model.forward(x, mode="eval", cache=cache)
        val_loss = model.loss(ev, labels, val_idx)
        val_acc = float(np.mean(predict_labels(ev.probs)[val_idx] == labels[val_idx]))
        state, stop = early_stopping_update(state, val_acc, val_loss)
        epoch_seconds.append(time.perf_counter() - started)
        if stop:
            stopped = state.patience_counter >= PATIENCE
            break
    else:
        state.restore_snapshot()
    return TrainHistory(epochs_run=state.epoch, best_val_acc=state.best_val_acc,
                        epoch_seconds=epoch_seconds, stopped_early=stopped)
