"""Mini-batch training with validation-based model selection."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .quadrature import make_rng

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    patience: int = 20
    val_fraction: float = 1.0 / 9.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainTrace:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self):
        return len(self.train_loss)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
            for i, row in enumerate(zip(self.train_loss, self.val_loss, self.val_acc)):
                w.writerow([i, *(repr(float(v)) for v in row)])


def softmax_cross_entropy(logits: np.ndarray, labels) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    logp = dc.log_softmax(np.asarray(logits, dtype=np.float64))
    return float(-logp[np.arange(len(labels)), labels].mean())


def carve_validation(X, y, fraction):
    """Split off the last ``floor(n * fraction)`` samples (at least one)."""
    n_val = max(1, int(np.floor(len(X) * fraction)))
    if n_val >= len(X):
        raise ValueError(f"cannot carve {n_val} validation samples out of {len(X)}")
    return X[:-n_val], y[:-n_val], X[-n_val:], y[-n_val:]


def _param_norms(model):
    return {name: float(np.linalg.norm(p.data)) for name, p in model.named_parameters()}


def train(model, X, y, config: TrainConfig | None = None, X_val=None, y_val=None):
    """Fit ``model`` on ``(X, y)``; returns ``(model, trace)``.

    The returned model carries the parameters of the epoch with the best
    validation accuracy (ties broken by lower validation loss).
    """
    config = config or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ValueError("training set must contain at least two classes")
    if X_val is None:
        X, y, X_val, y_val = carve_validation(X, y, config.val_fraction)
    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.int64)

    opt = dc.make_optimizer(config.optimizer, model.parameters(), config.lr)
    rng = make_rng(config.seed, 21)
    trace = TrainTrace()
    best_key, best_state, stale = None, model.state_dict(), 0
    n = len(X)

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss = dc.cross_entropy(model.logits(X[idx], training=True), y[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise FloatingPointError(
                    f"non-finite loss {value} at epoch {epoch}, batch indices {idx.tolist()}; "
                    f"parameter norms {_param_norms(model)}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += value * len(idx)
        val_logits = model.predict_logits(X_val)
        val_loss = softmax_cross_entropy(val_logits, y_val)
        val_acc = float(np.mean(np.argmax(val_logits, axis=1) == y_val))
        trace.train_loss.append(total / n)
        trace.val_loss.append(val_loss)
        trace.val_acc.append(val_acc)
        trace.epoch_seconds.append(time.perf_counter() - t0)
        log.debug("epoch %d train_loss=%.4f val_loss=%.4f val_acc=%.3f", epoch, total / n, val_loss, val_acc)

        key = (val_acc, -val_loss)
        if best_key is None or key > best_key:
            best_key, best_state, stale = key, model.state_dict(), 0
            trace.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break

    model.load_state_dict(best_state)
    return model, trace


def evaluate(model, X):
    """Predictions and logits under the evaluation regime."""
    logits = model.predict_logits(X)
    return np.argmax(logits, axis=1), logits
