"""MSE training loop with Adam or plain gradient descent."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .models import Batch, SurrogateModel

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e3


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_json(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(t.value) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.value) for k, t in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * p.grad
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * p.grad**2
            p.value = p.value - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class SGD:
    def __init__(self, params: dict, lr: float):
        self.params, self.lr = params, lr

    def step(self) -> None:
        for p in self.params.values():
            if p.grad is not None:
                p.value = p.value - self.lr * p.grad


def group_by_length(batches: Sequence[Batch]) -> list[Batch]:
    """Merge single-sequence batches of equal length into one batch per length."""
    by_len: dict[int, list[Batch]] = {}
    for b in batches:
        by_len.setdefault(b.length, []).append(b)
    merged = []
    for L in sorted(by_len):
        group = by_len[L]
        merged.append(
            Batch(
                np.concatenate([b.raw for b in group]),
                np.concatenate([b.noisy for b in group]),
                np.concatenate([b.survival for b in group]),
                np.concatenate([b.target for b in group]) if group[0].target is not None else None,
            )
        )
    return merged


def _slice(batch: Batch, idx: np.ndarray) -> Batch:
    return Batch(batch.raw[idx], batch.noisy[idx], batch.survival[idx], batch.target[idx])


def mse(model: SurrogateModel, batches: Sequence[Batch]) -> float:
    """Mean over all (sequence, layer) points of the squared error."""
    total, count = 0.0, 0
    for b in batches:
        err = model.predict(b) - b.target
        total += float(np.sum(err**2))
        count += err.size
    return total / count


def train(model: SurrogateModel, data: Sequence[Batch], config: TrainingConfig = TrainingConfig()) -> list[float]:
    """Fit ``model`` in place; returns the training MSE after each epoch (index 0 is before training).

    Mini-batches never mix lengths. Each epoch visits the length groups and
    their chunks in a seeded random order.
    """
    groups = group_by_length(data)
    if not groups or sum(b.noisy.shape[0] for b in groups) == 0:
        raise ValueError("cannot train on an empty dataset")
    if any(b.target is None for b in groups):
        raise ValueError("training data needs noiseless targets")
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.params, config.learning_rate) if config.optimizer == "adam" else SGD(model.params, config.learning_rate)
    n_points = sum(b.noisy.size for b in groups)
    curve = [mse(model, groups)]
    for epoch in range(config.epochs):
        chunks = []
        for b in groups:
            order = rng.permutation(b.noisy.shape[0])
            for start in range(0, order.size, config.batch_size):
                chunks.append(_slice(b, order[start : start + config.batch_size]))
        for i in rng.permutation(len(chunks)):
            chunk = chunks[i]
            for p in model.params.values():
                p.zero_grad()
            pred = model.forward(chunk)
            # scale so a full pass matches the mean over all points
            loss = ((pred - chunk.target) ** 2).sum() * (len(chunks) / n_points)
            loss.backward()
            opt.step()
        epoch_loss = mse(model, groups)
        if not np.isfinite(epoch_loss) or epoch_loss > DIVERGENCE_LIMIT:
            raise TrainingDiverged(f"training loss {epoch_loss:.3g} at epoch {epoch + 1} exceeds {DIVERGENCE_LIMIT:g}")
        curve.append(epoch_loss)
    log.info("trained %s: loss %.3g -> %.3g", model.kind, curve[0], curve[-1])
    return curve
