"""Quantile-loss training with Adam and early stopping; evaluation reports."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, fields
from typing import Any

import numpy as np

from .data import WindowBatch
from .encdec import ForecastQuantiles, pinball_loss
from .metrics import EvaluationReport, evaluation_report
from .model import Forecaster, NeuralForecaster
from .numerics import Tensor, backward, no_grad

logger = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, batch_index: int, epoch: int):
        super().__init__(message)
        self.batch_index = batch_index
        self.epoch = epoch


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_batch_size: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        for name in ("batch_size", "max_epochs", "patience", "eval_batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise KeyError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


class Adam:
    """Adam with bias correction over a fixed parameter list."""

    def __init__(self, params: list[Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_gradients(params: list[Tensor], max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most ``max_norm``; returns the norm."""
    total = float(np.sqrt(sum(float((p.grad**2).sum()) for p in params if p.grad is not None)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


def batch_loss(model: NeuralForecaster, batch: WindowBatch) -> Tensor:
    raw = model.forward_raw(batch.measured, batch.nwp)
    return pinball_loss(raw, batch.target, model.levels)


def predict_batch(model: Forecaster, batch: WindowBatch, chunk: int = 512) -> ForecastQuantiles:
    """Forecast every window in ``batch``, chunked to bound memory."""
    parts = []
    for lo in range(0, len(batch), chunk):
        sub = batch.subset(slice(lo, lo + chunk))
        parts.append(model.predict(sub.measured, sub.nwp, sub.speed100).values)
    return ForecastQuantiles(np.asarray(model.levels), np.concatenate(parts))


def raw_pinball(model: NeuralForecaster, batch: WindowBatch, chunk: int = 512) -> float:
    """Mean quantile loss of raw (unsorted, unclipped) outputs, the training objective."""
    total = 0.0
    with no_grad():
        for lo in range(0, len(batch), chunk):
            sub = batch.subset(slice(lo, lo + chunk))
            total += batch_loss(model, sub).item() * len(sub)
    return total / len(batch)


@dataclass
class TrainResult:
    history: list[dict[str, float]]
    best_epoch: int
    best_val: float
    state: dict[str, np.ndarray]

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("epoch", "train_loss", "val_pinball"))
            for row in self.history:
                w.writerow((row["epoch"], repr(row["train_loss"]), repr(row["val_pinball"])))


def train(model: NeuralForecaster, train_data: WindowBatch, val_data: WindowBatch, cfg: TrainConfig) -> TrainResult:
    """Minimise quantile loss with shuffled mini-batches, keeping the best-validation parameters.

    On return the model holds the best parameters seen. Validation is scored
    on raw outputs, matching the training objective.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("training and validation partitions must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    best_val = raw_pinball(model, val_data, cfg.eval_batch_size)
    best_state = model.state_dict()
    best_epoch = 0
    history: list[dict[str, float]] = []
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_data))
        losses, weights = [], []
        for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
            batch = train_data.subset(order[lo : lo + cfg.batch_size])
            model.zero_grad()
            loss = batch_loss(model, batch)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericalError(f"non-finite loss in epoch {epoch}, batch {b}", b, epoch)
            backward(loss)
            clip_gradients(params, cfg.clip_norm)
            opt.step()
            losses.append(value)
            weights.append(len(batch))
        val = raw_pinball(model, val_data, cfg.eval_batch_size)
        train_loss = float(np.average(losses, weights=weights))
        history.append({"epoch": epoch, "train_loss": train_loss, "val_pinball": val})
        logger.info("epoch %d train %.5f val %.5f", epoch, train_loss, val)
        if val < best_val:
            best_val, best_state, best_epoch, stale = val, model.state_dict(), epoch, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.zero_grad()
    model.load_state_dict(best_state)
    return TrainResult(history, best_epoch, best_val, best_state)


def evaluate(model: Forecaster, samples: WindowBatch, n_samples: int = 100, seed: int = 0) -> EvaluationReport:
    """Six-metric report plus per-horizon MAE; point models skip CRPS and PS."""
    if len(samples) == 0:
        raise ValueError("no samples to evaluate")
    q = predict_batch(model, samples)
    return evaluation_report(samples.target, q, probabilistic=model.trainable, n_samples=n_samples, seed=seed)
