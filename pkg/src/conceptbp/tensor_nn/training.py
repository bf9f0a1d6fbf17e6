"""Optimizers and the minibatch training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import NumericOverflowError, Tensor
from .layers import Model

log = logging.getLogger(__name__)

LOSSES = ("mse", "bce")
OPTIMIZERS = ("sgd", "adam")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 10
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epoch count must be non-negative, got {self.epochs}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        for name, g in grads.items():
            params[name] = params[name] - self.lr * g


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self.beta1 * self.m.get(name, 0.0) + (1.0 - self.beta1) * g
            v = self.beta2 * self.v.get(name, 0.0) + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] = params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, lr: float):
    return Adam(lr) if kind == "adam" else SGD(lr)


def loss_value(kind: str, pred: Tensor, target: Tensor) -> Tensor:
    if kind == "mse":
        return ad.mean(ad.power(pred - target, 2.0))
    if kind == "bce":
        p = ad.clip(pred, 1e-12, 1.0 - 1e-12)
        ll = target * ad.log(p) + (1.0 - target) * ad.log(1.0 - p)
        return -ad.mean(ll)
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")


LossFn = Callable[[Mapping[str, Tensor], np.ndarray, np.ndarray], Tensor]


def fit_params(params: Mapping[str, np.ndarray], loss_fn: LossFn, x: np.ndarray, y: np.ndarray,
               config: TrainConfig) -> tuple[dict[str, np.ndarray], list[float]]:
    """Minimise ``loss_fn(params, xb, yb)`` over minibatches.

    Returns fresh parameter arrays and the per-epoch mean minibatch loss.
    """
    if len(x) == 0:
        raise ValueError("empty dataset")
    if len(x) != len(y):
        raise ValueError(f"{len(x)} inputs but {len(y)} targets")
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    opt = make_optimizer(config.optimizer, config.lr)
    rng = np.random.default_rng(config.seed)
    names = list(params)
    curve: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for i in range(0, len(x), config.batch_size):
            idx = order[i:i + config.batch_size]
            leaves = {k: Tensor(params[k], requires_grad=True, name=k) for k in names}
            try:
                loss = loss_fn(leaves, x[idx], y[idx])
                grads = ad.backward(loss, [leaves[k] for k in names])
            except NumericOverflowError as exc:
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}, batch {i // config.batch_size}: {exc}"
                ) from exc
            opt.step(params, dict(zip(names, grads)))
            total += loss.item() * len(idx)
        curve.append(total / len(x))
        if not np.isfinite(curve[-1]):
            raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}")
        log.debug("epoch %d loss %.6g", epoch, curve[-1])
    return params, curve


def train_supervised(model: Model, x: np.ndarray, y: np.ndarray, loss: str,
                     config: TrainConfig) -> tuple[Model, list[float]]:
    """Train a copy of ``model``; the input model is left untouched."""
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def loss_fn(params, xb, yb):
        out, _ = model.forward(Tensor(xb), params)
        return loss_value(loss, out, Tensor(yb.reshape(out.shape)))

    params, curve = fit_params(model.params, loss_fn, x, y, config)
    trained = model.copy()
    trained.params = params
    return trained, curve
