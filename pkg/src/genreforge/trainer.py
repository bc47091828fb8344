"""Mini-batch SGD with inverse-time learning-rate decay and L2 weight decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .layers import softmax_cross_entropy

__all__ = [
    "TrainConfig",
    "TrainReport",
    "lr_at",
    "sgd_step",
    "train",
    "evaluate_segments",
    "format_progress",
]


@dataclass
class TrainConfig:
    epochs: int
    seed: int = 0
    lr0: float = 1e-2
    decay: float = 1e-6
    batch_size: int = 128
    l2_lambda: float = 1e-4

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if self.decay < 0:
            raise ValueError(f"decay must be >= 0, got {self.decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.l2_lambda < 0:
            raise ValueError(f"l2_lambda must be >= 0, got {self.l2_lambda}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class TrainReport:
    loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    steps: int = 0
    best_epoch: int | None = None
    best_val_acc: float | None = None


def lr_at(step, cfg):
    """``lr0 / (1 + decay * step)`` where ``step`` counts parameter updates."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return cfg.lr0 / (1.0 + cfg.decay * step)


def sgd_step(net, lr, l2):
    """Apply ``w <- w - lr * (grad + l2 * w)`` and zero the gradients.

    The L2 term applies only to params flagged ``decay`` (conv and dense
    weights). Raises :class:`DivergenceError` naming the first param whose
    gradient is not finite, before anything is modified.
    """
    params = net.parameters()
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise DivergenceError(f"non-finite gradient in {p.name or 'unnamed parameter'}")
    for p in params:
        if p.decay and l2:
            p.value -= (lr * (p.grad + l2 * p.value)).astype(p.value.dtype, copy=False)
        else:
            p.value -= (lr * p.grad).astype(p.value.dtype, copy=False)
        p.zero_grad()
    return net


def evaluate_segments(net, x, labels, batch_size=128):
    """Fraction of slices whose argmax logit equals the label (ties -> lowest index)."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot evaluate an empty slice set")
    logits, _, _ = net.predict(x, batch_size)
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def format_progress(epoch, loss, train_acc, val_acc, lr):
    val = "nan" if val_acc is None else f"{val_acc:.4f}"
    return f"epoch={epoch} loss={loss:.6f} train_acc={train_acc:.4f} val_acc={val} lr={lr:.8f}"


def train(net, x_train, y_train, x_val=None, y_val=None, cfg=None, log=print):
    """Train ``net`` in place and return a :class:`TrainReport`.

    Each epoch shuffles the training slices with a generator seeded from
    ``cfg.seed``, runs every mini-batch (the trailing short one included)
    through forward, cross-entropy, backward and :func:`sgd_step`. Loss and
    training accuracy are averaged over the epoch's batches in training
    mode. When validation data is given, the parameters from the epoch with
    the best validation segment accuracy are restored at the end.
    """
    if cfg is None:
        raise ValueError("a TrainConfig is required")
    y_train = np.asarray(y_train, dtype=np.int64)
    n = x_train.shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    if y_train.shape != (n,):
        raise ValueError(f"{n} training slices but {y_train.shape} labels")
    if y_train.min() < 0 or y_train.max() >= net.cfg.num_classes:
        raise ValueError(f"training labels must lie in [0, {net.cfg.num_classes})")
    has_val = x_val is not None and y_val is not None and len(y_val) > 0

    rng = np.random.default_rng(cfg.seed)
    net.reseed_dropout(cfg.seed)
    net.zero_grad()
    report = TrainReport()
    best_state = None
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits = net.forward(x_train[idx], training=True)
            loss, grad = softmax_cross_entropy(logits, y_train[idx])
            if not math.isfinite(loss):
                raise DivergenceError(f"loss became {loss} at epoch {epoch}, step {step}")
            net.backward(grad)
            lr = lr_at(step, cfg)
            sgd_step(net, lr, cfg.l2_lambda)
            step += 1
            total_loss += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == y_train[idx]))
        epoch_loss = total_loss / n
        epoch_acc = correct / n
        val_acc = evaluate_segments(net, x_val, y_val) if has_val else None
        report.loss.append(epoch_loss)
        report.train_acc.append(epoch_acc)
        if has_val:
            report.val_acc.append(val_acc)
            if report.best_val_acc is None or val_acc > report.best_val_acc:
                report.best_val_acc = val_acc
                report.best_epoch = epoch
                best_state = [a.copy() for a in net.state_arrays()]
        report.lr.append(lr_at(step, cfg))
        report.steps = step
        if log is not None:
            log(format_progress(epoch, epoch_loss, epoch_acc, val_acc, lr_at(step, cfg)))
    if best_state is not None:
        net.load_state_arrays(best_state)
    return report
