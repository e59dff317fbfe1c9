"""Surrogate-gradient training with SGD, linear warm-up and cosine annealing."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ContractViolation, TrainingDiverged
from .snn import SpikingNetwork, forward_backward, forward_t

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 16
    warmup_epochs: int = 1
    max_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-5
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ContractViolation("epoch counts must be non-negative")
        if self.epochs and self.warmup_epochs >= self.epochs:
            raise ContractViolation("warmup_epochs must be < epochs")
        if self.max_lr <= 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ContractViolation("learning rate, momentum or weight decay out of range")
        if self.batch_size < 1:
            raise ContractViolation("batch_size must be >= 1")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Learning rate for ``epoch`` (0-based).

    Linear ramp reaching ``max_lr`` at ``epoch == warmup_epochs``, cosine decay
    towards zero over the remaining epochs.
    """
    w = cfg.warmup_epochs
    if epoch < w:
        return cfg.max_lr * (epoch + 1) / (w + 1)
    span = cfg.epochs - w
    return 0.5 * cfg.max_lr * (1.0 + math.cos(math.pi * (epoch - w) / span))


@dataclass
class TrainHistory:
    loss: list
    train_acc: list
    lr: list


def train(net: SpikingNetwork, data: Dataset, cfg: TrainConfig):
    """Train a copy of ``net``; the argument is left untouched.

    Returns ``(trained_net, history)``. Weights are kept in float32 between
    steps so checkpoints round-trip exactly.
    """
    if len(data) == 0:
        raise ContractViolation("training set is empty")
    net = net.copy()
    history = TrainHistory([], [], [])
    if cfg.epochs == 0:
        return net, history
    rng = np.random.default_rng(cfg.seed)
    velocity = [np.zeros(l.weight.shape) for l in net.layers]
    n = len(data)
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        order = rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = data.x[idx], data.y[idx]
            loss, grads, logits, _ = forward_backward(net, xb, yb)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became {loss} at epoch {epoch}, batch starting {start}, lr={lr:.4g}"
                )
            total_loss += loss * len(idx)
            correct += int((logits.mean(axis=0).argmax(axis=1) == yb).sum())
            for layer, g, v in zip(net.layers, grads, velocity):
                w = layer.weight.astype(np.float64)
                g = g + cfg.weight_decay * w
                v *= cfg.momentum
                v += g
                layer.weight = (w - lr * v).astype(np.float32)
        history.loss.append(total_loss / n)
        history.train_acc.append(correct / n)
        history.lr.append(lr)
        log.debug("epoch %d lr=%.4f loss=%.4f acc=%.4f", epoch, lr, total_loss / n, correct / n)
    return net, history


def predict(net: SpikingNetwork, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(x), batch_size):
        logits, _ = forward_t(net, x[start : start + batch_size])
        out.append(logits.mean(axis=0).argmax(axis=1))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def evaluate(net: SpikingNetwork, data: Dataset, batch_size: int = 256) -> float:
    """Top-1 accuracy of the time-averaged logits."""
    if len(data) == 0:
        raise ContractViolation("evaluation set is empty")
    return float(np.mean(predict(net, data.x, batch_size) == data.y))
