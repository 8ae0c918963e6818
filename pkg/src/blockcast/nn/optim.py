"""Parameter update rules."""

import numpy as np

from ..errors import TrainingDivergenceError


class Optimizer:
    def __init__(self, params):
        self.params = list(params)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def _check_finite(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise TrainingDivergenceError(f"non-finite gradient in {p.name}")

    def step(self):
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params, lr: float):
        super().__init__(params)
        self.lr = lr

    def step(self):
        self._check_finite()
        for p in self.params:
            p.data -= self.lr * p.grad


class Adam(Optimizer):
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self._check_finite()
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad ** 2
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def make_optimizer(name: str, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
    if name == "sgd":
        return SGD(params, lr)
    if name == "adam":
        return Adam(params, lr, betas, eps)
    raise ValueError(f"unknown optimizer {name!r}")
