"""Named parameters with gradient slots, Adam state, and the Adam update."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..errors import ShapeError
from .autodiff import Tensor


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    step: int = 0
    trainable: bool = True

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.value.shape:
            raise ShapeError(f"gradient shape {g.shape} != value shape {self.value.shape}")
        if self.trainable:
            self.grad += g


class ParameterStore:
    """Ordered mapping ``name -> Param`` plus non-trainable buffers."""

    def __init__(self):
        self.params: dict[str, Param] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> Param:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        p = Param(np.array(value, dtype=np.float64))
        self.params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.params if n.startswith(prefix)]

    def tensor(self, name: str) -> Tensor:
        """Leaf tensor bound to parameter ``name``; backward fills its gradient slot."""
        p = self.params[name]
        return Tensor(p.value, requires_grad=p.trainable, param=p)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad[...] = 0.0

    def set_trainable(self, names: Iterable[str], trainable: bool) -> None:
        for n in names:
            self.params[n].trainable = trainable

    def copy(self) -> "ParameterStore":
        out = ParameterStore()
        for n, p in self.params.items():
            q = out.add(n, p.value.copy())
            q.m, q.v, q.step, q.trainable = p.m.copy(), p.v.copy(), p.step, p.trainable
        out.buffers = {k: v.copy() for k, v in self.buffers.items()}
        return out

    def n_values(self) -> int:
        return int(sum(p.value.size for p in self.params.values()))


def adam_step(store: ParameterStore, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              names: Iterable[str] | None = None) -> None:
    """Bias-corrected Adam update on the selected trainable entries, then zero their gradients."""
    selected = store.params if names is None else {n: store.params[n] for n in names}
    for p in selected.values():
        if not p.trainable:
            p.grad[...] = 0.0
            continue
        p.step += 1
        g = p.grad
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * (g * g)
        m_hat = p.m / (1.0 - beta1**p.step)
        v_hat = p.v / (1.0 - beta2**p.step)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad[...] = 0.0
