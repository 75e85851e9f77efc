"""Optimizers and the plateau learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SGD:
    def __init__(self, params, lr: float = 1e-2):
        self.params = list(params)
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.requires_grad and p.grad is not None:
                p.values -= self.lr * p.grad

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Adam:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if not p.requires_grad or p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.values -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


@dataclass
class ReduceLROnPlateau:
    """Halve the learning rate after ``patience`` epochs without improvement.

    ``terminated`` turns true once the rate falls below ``lr_floor``.
    """

    lr: float
    patience: int = 10
    factor: float = 0.5
    lr_floor: float = 1e-5
    mode: str = "max"
    best: float = field(default=None)
    bad_epochs: int = 0
    terminated: bool = False

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.mode not in ("max", "min"):
            raise ValueError("mode must be 'max' or 'min'")

    def _improved(self, metric: float) -> bool:
        if self.best is None:
            return True
        return metric > self.best if self.mode == "max" else metric < self.best

    def step(self, metric: float) -> float:
        if self._improved(metric):
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
                if self.lr < self.lr_floor:
                    self.terminated = True
        return self.lr


def reduce_lr_on_plateau(history, lr: float, patience: int = 10, lr_floor: float = 1e-5, mode: str = "max"):
    """Replay a metric history; return ``(lr, terminated)``."""
    sched = ReduceLROnPlateau(lr, patience=patience, lr_floor=lr_floor, mode=mode)
    for metric in history:
        sched.step(metric)
        if sched.terminated:
            break
    return sched.lr, sched.terminated
