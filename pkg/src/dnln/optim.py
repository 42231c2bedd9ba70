"""Losses, Adam optimizer and the learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .ops import abs_mean, sq_mean, sub
from .tensor import Tensor


class NonFiniteGradientError(ValueError):
    """An optimizer step saw a NaN/inf gradient; the step was not applied."""


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    return abs_mean(sub(pred, target))


def l2_loss(pred: Tensor, target: Tensor) -> Tensor:
    return sq_mean(sub(pred, target))


LOSSES = {"l1": l1_loss, "l2": l2_loss}

BASE_LR = 1e-4
DROP_START_EPOCH = 70
HALVE_EVERY_EPOCHS = 20


def lr_at(epoch: int, base_lr: float = BASE_LR) -> float:
    """Constant before the drop epoch, then halved every fixed interval."""
    if epoch < DROP_START_EPOCH:
        return base_lr
    return base_lr * 2.0 ** -(1 + (epoch - DROP_START_EPOCH) // HALVE_EVERY_EPOCHS)


class Adam:
    """Bias-corrected Adam over a name -> Tensor parameter map."""

    def __init__(self, params: dict, lr: float = BASE_LR, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradientError(f"non-finite gradient in {name}; step rejected")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
