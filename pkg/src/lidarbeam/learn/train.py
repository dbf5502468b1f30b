"""Adadelta training loop."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .layers import sigmoid_cross_entropy, softmax_cross_entropy
from .network import Network

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch):
        super().__init__(f"training loss became NaN at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 32
    rho: float = 0.95
    epsilon: float = 1e-6
    learning_rate: float = 1.0
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("Adadelta rho must lie in (0, 1)")
        if self.epsilon <= 0 or self.learning_rate <= 0 or self.l2 < 0:
            raise ValueError("epsilon and learning_rate must be positive, l2 non-negative")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return dict(vars(self))


class Adadelta:
    """Running averages of squared gradients and squared updates; the step
    is -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g."""

    def __init__(self, rho=0.95, epsilon=1e-6, learning_rate=1.0):
        self.rho, self.eps, self.lr = rho, epsilon, learning_rate
        self.state = {}

    def step(self, key, param, grad):
        eg, ex = self.state.get(key, (None, None))
        if eg is None:
            eg = np.zeros_like(param)
            ex = np.zeros_like(param)
        rho, eps = self.rho, self.eps
        eg = rho * eg + (1 - rho) * grad * grad
        dx = -np.sqrt(ex + eps) / np.sqrt(eg + eps) * grad
        ex = rho * ex + (1 - rho) * dx * dx
        self.state[key] = (eg, ex)
        param += self.lr * dx


def loss_and_grad(network: Network, x, y, l2: float = 0.0, training: bool = True):
    logits = network.forward(x, training=training)
    if network.head == "topM":
        loss, dlogits = softmax_cross_entropy(logits, y)
    else:
        loss, dlogits = sigmoid_cross_entropy(logits, y)
    network.backward(dlogits.astype(network.dtype))
    if l2 > 0:
        for (i, name), layer in network.param_items():
            if name == "W":
                w = layer.params[name]
                loss += l2 * float(np.sum(w.astype(np.float64) ** 2))
                layer.grads[name] = layer.grads[name] + 2 * l2 * w
    return loss


def evaluate_loss(network: Network, x, y, batch_size=64) -> float:
    total = 0.0
    for i in range(0, len(x), batch_size):
        logits = network.forward(x[i:i + batch_size], training=False).astype(np.float64)
        yb = y[i:i + batch_size]
        if network.head == "topM":
            loss, _ = softmax_cross_entropy(logits, yb)
        else:
            loss, _ = sigmoid_cross_entropy(logits, np.asarray(yb, dtype=np.float64))
        total += loss * len(logits)
    return total / max(len(x), 1)


def train(network: Network, x, y, cfg: TrainConfig, x_val=None, y_val=None):
    """Fit ``network`` in place. ``y`` holds target distributions for the
    top-M head or 0/1 LOS flags for the binary head.

    Returns a list of (epoch, train_loss, val_loss) rows; val_loss is NaN
    when no validation set is given.
    """
    x = np.asarray(x, dtype=network.dtype)
    y = np.asarray(y, dtype=network.dtype)
    if len(x) == 0:
        raise ValueError("empty training set")
    if network.head == "binary":
        y = y.reshape(-1, 1)
    rng = np.random.default_rng(cfg.seed)
    network.set_dropout_rng(np.random.default_rng([cfg.seed, 1]))
    opt = Adadelta(cfg.rho, cfg.epsilon, cfg.learning_rate)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x))
        running, seen = 0.0, 0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = loss_and_grad(network, x[idx], y[idx], cfg.l2)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            for key, layer in network.param_items():
                opt.step(key, layer.params[key[1]], layer.grads[key[1]])
            running += loss * len(idx)
            seen += len(idx)
        val = float("nan")
        if x_val is not None and len(x_val):
            yv = np.asarray(y_val, dtype=np.float64)
            val = evaluate_loss(network, np.asarray(x_val, dtype=network.dtype),
                                yv.reshape(-1, 1) if network.head == "binary" else yv)
        history.append((epoch, running / seen, val))
        log.info("epoch %d train %.4f val %.4f", epoch, running / seen, val)
    return history


def write_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, tr, va in history:
            w.writerow([epoch, repr(float(tr)), repr(float(va))])
