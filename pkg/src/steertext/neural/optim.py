"""SGD and decoupled-weight-decay adaptive optimizers."""

from __future__ import annotations

import numpy as np

from .store import ParamStore


class Sgd:
    def __init__(self, lr: float):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr

    def step(self, store: ParamStore) -> None:
        for name in store.names():
            g = store.grads.get(name)
            if g is None:
                continue
            store.params[name] -= self.lr * g


class AdamW:
    """Adam with weight decay applied directly to parameters, not gradients."""

    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay

    def step(self, store: ParamStore) -> None:
        for name in store.names():
            g = store.grads.get(name)
            if g is None:
                continue
            st = store.state.setdefault(name, {})
            if "m" not in st:
                st["m"] = np.zeros_like(store.params[name])
                st["v"] = np.zeros_like(store.params[name])
                st["t"] = 0
            st["t"] += 1
            t = st["t"]
            st["m"] = self.beta1 * st["m"] + (1 - self.beta1) * g
            st["v"] = self.beta2 * st["v"] + (1 - self.beta2) * g * g
            mhat = st["m"] / (1 - self.beta1**t)
            vhat = st["v"] / (1 - self.beta2**t)
            p = store.params[name]
            if self.weight_decay:
                p -= self.lr * self.weight_decay * p
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(kind: str, lr: float, weight_decay: float = 0.0):
    if kind == "sgd":
        return Sgd(lr)
    if kind == "adaptive":
        return AdamW(lr, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {kind!r}")
