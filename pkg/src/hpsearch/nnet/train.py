"""Mini-batch SGD training with Nesterov momentum and per-step decay."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..space import ParamSpace, default_space
from .augment import augment_batch
from .layers import weighted_cross_entropy
from .model import NetSpec, Network, TrainedNet, init_params

AUGMENT_FACTOR = 4
DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class TrainParams:
    learning_rate: float
    batch_size: int
    epochs: int
    augment: bool
    momentum: float = 0.9
    decay: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning rate, batch size and epochs must be positive")

    @classmethod
    def from_point(cls, point: Sequence, space: ParamSpace | None = None, seed: int = 0) -> "TrainParams":
        hp = (space or default_space()).derived(point)
        return cls(
            learning_rate=float(hp["l"]),
            batch_size=int(hp["a"]),
            epochs=int(hp["e"]),
            augment=hp["g"] == "Yes",
            seed=seed,
        )

    def samples_per_epoch(self, n_train: int) -> int:
        return n_train * (AUGMENT_FACTOR if self.augment else 1)


class SGD:
    """Nesterov momentum with learning rate ``lr / (1 + decay * step)``.

    Update: ``v = m*v - lr_t*g``; ``w += m*v - lr_t*g``.
    """

    def __init__(self, params: list[np.ndarray], lr: float, momentum: float = 0.9, decay: float = 1e-6):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.decay = decay
        self.step_count = 0
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        lr = self.lr / (1.0 + self.decay * self.step_count)
        m = self.momentum
        for p, v, g in zip(self.params, self.velocity, grads):
            if m:
                v *= m
                v -= lr * g
                p += m * v - lr * g
            else:
                p -= lr * g
        self.step_count += 1


def evaluate(net: TrainedNet | Network, images, labels, class_weights) -> tuple[float, float]:
    """Weighted cross-entropy and error rate."""
    probs = net.predict_proba(images)
    loss = weighted_cross_entropy(probs, labels, class_weights)
    error = float(np.mean(probs.argmax(axis=1) != np.asarray(labels)))
    return loss, error


def train(
    spec: NetSpec,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    class_weights,
    tp: TrainParams,
    dtype=np.float32,
) -> TrainedNet:
    """Train from scratch and report validation metrics.

    ``metrics["status"]`` is ``"diverged"`` when a training loss turns
    non-finite or the validation loss exceeds ten times the uniform-guess
    loss; training stops at the first non-finite loss.
    """
    rng = np.random.default_rng(tp.seed)
    params = init_params(spec, rng, dtype)
    net = Network(spec, params)
    opt = SGD(params, tp.learning_rate, tp.momentum, tp.decay)
    cw = np.asarray(class_weights, dtype=dtype)
    x_train = np.asarray(x_train, dtype=dtype)
    y_train = np.asarray(y_train)
    n = len(x_train)
    status = "ok"
    train_loss = math.nan
    epoch_losses: list[float] = []

    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        for _ in range(tp.epochs):
            if tp.augment:
                idx = np.tile(np.arange(n), AUGMENT_FACTOR)
                xs = augment_batch(x_train[idx], rng)
                ys = y_train[idx]
            else:
                xs, ys = x_train, y_train
            order = rng.permutation(len(xs))
            total, count = 0.0, 0
            for lo in range(0, len(order), tp.batch_size):
                b = order[lo:lo + tp.batch_size]
                loss, grads, _ = net.loss_and_grads(xs[b], ys[b], cw)
                if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                    status = "diverged"
                    break
                opt.step(grads)
                total += loss * len(b)
                count += len(b)
            if status != "ok":
                break
            train_loss = total / count
            epoch_losses.append(train_loss)

        trained = TrainedNet(spec, params)
        if status == "ok" and not all(np.all(np.isfinite(p)) for p in params):
            status = "diverged"
        if status == "ok":
            val_loss, val_error = evaluate(trained, x_val, y_val, class_weights)
            if not math.isfinite(val_loss) or val_loss > DIVERGENCE_FACTOR * math.log(spec.num_classes):
                status = "diverged"
        else:
            val_loss, val_error = math.nan, math.nan

    trained.metrics = {
        "status": status,
        "train_loss": train_loss,
        "val_loss": val_loss,
        "val_error": val_error,
        "epoch_losses": epoch_losses,
        "steps": opt.step_count,
    }
    return trained
