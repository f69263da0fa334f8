"""First-order optimizers, written as descent on -C so ascent maximizes C."""
from __future__ import annotations

import numpy as np


class Optimizer:
    name = "base"

    def __init__(self, lr: float = 0.1):
        self.lr = lr
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float | None = None) -> np.ndarray:
        """Return updated parameters for one ascent step along ``grad``."""
        params = np.asarray(params, dtype=float)
        grad = np.asarray(grad, dtype=float)
        if params.shape != grad.shape:
            raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}")
        self.t += 1
        lr = self.lr if lr is None else lr
        return params - lr * self._direction(-grad)

    def _direction(self, g: np.ndarray) -> np.ndarray:  # descent direction for loss gradient g
        raise NotImplementedError


class SGD(Optimizer):
    name = "sgd"

    def _direction(self, g):
        return g


class Adam(Optimizer):
    name = "adam"

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = self.v = None

    def _moments(self, g):
        if self.m is None:
            self.m = np.zeros_like(g)
            self.v = np.zeros_like(g)
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g

    def _direction(self, g):
        self._moments(g)
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)


class Nadam(Adam):
    """Adam with a Nesterov look-ahead on the first moment (Dozat 2016)."""
    name = "nadam"

    def _direction(self, g):
        self._moments(g)
        b1 = self.beta1
        m_hat = b1 * self.m / (1 - b1 ** (self.t + 1)) + (1 - b1) * g / (1 - b1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)


class Adamax(Optimizer):
    name = "adamax"

    def __init__(self, lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = self.u = None

    def _direction(self, g):
        if self.m is None:
            self.m = np.zeros_like(g)
            self.u = np.zeros_like(g)
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.u = np.maximum(self.beta2 * self.u, np.abs(g))
        return self.m / ((1 - self.beta1**self.t) * (self.u + self.eps))


class RMSprop(Optimizer):
    name = "rmsprop"

    def __init__(self, lr=0.01, decay=0.9, eps=1e-8):
        super().__init__(lr)
        self.decay, self.eps = decay, eps
        self.v = None

    def _direction(self, g):
        if self.v is None:
            self.v = np.zeros_like(g)
        self.v = self.decay * self.v + (1 - self.decay) * g * g
        return g / (np.sqrt(self.v) + self.eps)


OPTIMIZERS = {cls.name: cls for cls in (SGD, Adam, Nadam, Adamax, RMSprop)}


def make_optimizer(name: str, lr: float, **hyper) -> Optimizer:
    try:
        cls = OPTIMIZERS[name]
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; expected one of {sorted(OPTIMIZERS)}") from None
    return cls(lr=lr, **hyper)
