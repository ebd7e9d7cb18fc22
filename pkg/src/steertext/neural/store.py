"""Named parameter storage with gradient accumulators and optimizer state."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


class ParamStore:
    """Holds model parameters by name; iteration order is sorted by name."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, dict[str, np.ndarray]] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        self.params[name] = np.ascontiguousarray(value, dtype=self.dtype)

    def names(self) -> list[str]:
        return sorted(self.params)

    def zero_grads(self) -> None:
        self.grads = {}

    def accumulate(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if name not in self.params:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            if g.shape != self.params[name].shape:
                raise ad.ShapeError(
                    f"gradient shape {g.shape} != parameter shape "
                    f"{self.params[name].shape} for {name!r}"
                )
            if name in self.grads:
                self.grads[name] = self.grads[name] + g
            else:
                self.grads[name] = g.astype(self.dtype, copy=True)

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "ParamStore":
        dup = ParamStore(self.dtype)
        for name, p in self.params.items():
            dup.params[name] = p.copy()
        return dup

    def astype(self, dtype) -> "ParamStore":
        dup = ParamStore(dtype)
        for name, p in self.params.items():
            dup.params[name] = p.astype(dtype)
        return dup


class Graph:
    """Per-forward-pass leaf cache so each parameter appears once per tape."""

    def __init__(self, store: ParamStore):
        self.store = store
        self._leaves: dict[str, ad.Node] = {}

    def param(self, name: str) -> ad.Node:
        node = self._leaves.get(name)
        if node is None:
            node = ad.leaf(self.store.params[name], name)
            self._leaves[name] = node
        return node

    def const(self, value: np.ndarray) -> ad.Node:
        return ad.const(np.asarray(value, dtype=self.store.dtype))

    def backward(self, loss: ad.Node) -> None:
        self.store.accumulate(ad.backward(loss))
