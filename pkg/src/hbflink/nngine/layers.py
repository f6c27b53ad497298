"""Layer kinds of the dense engine and the binary feedback layer."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ShapeError, UsageError
from ..numerics import RngStream
from . import autodiff as ad
from .autodiff import CTensor, Tensor
from .store import ParameterStore

log = logging.getLogger(__name__)

ACTIVATIONS = {"relu": ad.relu, "sigmoid": ad.sigmoid, "tanh": ad.tanh, "none": ad.identity}
MODULUS_FLOOR = 1e-30


@dataclass
class LayerSpec:
    kind: str  # dense | activation | batchnorm | dropout | residual-block | binary
    fan_in: int = 0
    fan_out: int = 0
    activation: str = "none"
    dropout: float = 0.0
    alpha: float | None = None

    def __post_init__(self):
        if self.kind == "dense" and (self.fan_in < 1 or self.fan_out < 1):
            raise ShapeError("dense layers need fan-in and fan-out >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Ctx:
    """Per-forward settings.

    ``alpha`` is the current slope of the binary layers' surrogate.
    ``surrogate_forward`` makes binary layers emit the smooth surrogate in the
    forward pass as well; it exists only for finite-difference checking.
    """

    training: bool = False
    rng: RngStream | None = None
    alpha: float = 2.0
    surrogate_forward: bool = False


# --- functional forms -------------------------------------------------------


def dense_forward(w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"input width {x.shape[-1]} != fan-in {w.shape[1]}")
    return x @ w.T + b


def binary_forward(x) -> np.ndarray:
    """Hard sign with 0 mapped to +1."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def _sigm(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def binary_surrogate(x, alpha: float) -> np.ndarray:
    return 2.0 * _sigm(alpha * np.asarray(x)) - 1.0


def binary_backward(x, upstream, alpha: float) -> np.ndarray:
    """Straight-through gradient using the derivative of ``2 sigm(alpha x) - 1``."""
    if alpha <= 0:
        raise ValueError("slope alpha must be positive")
    s = _sigm(alpha * np.asarray(x))
    return np.asarray(upstream) * 2.0 * alpha * s * (1.0 - s)


def anneal_slope(epoch: int, start: float = 2.0, rate: float = 0.2) -> float:
    if epoch < 0:
        raise ValueError("epoch index must be non-negative")
    return start + rate * epoch


def binary_st(x: Tensor, alpha: float, surrogate_forward: bool = False) -> Tensor:
    xv = x.value
    out = binary_surrogate(xv, alpha) if surrogate_forward else binary_forward(xv)
    return ad._make(out, (x,), lambda g: (binary_backward(xv, g, alpha),))


def constant_modulus(raw: CTensor) -> CTensor:
    """``z / |z|`` entry-wise, differentiable through the quotient."""
    mag = ad.sqrt(raw.abs2())
    if np.any(mag.value < MODULUS_FLOOR):
        raise ValueError("near-zero entry in a constant-modulus parameter; repair it first")
    return CTensor(raw.re / mag, raw.im / mag)


def constant_modulus_param(raw) -> np.ndarray:
    z = np.asarray(raw, dtype=np.complex128)
    mag = np.abs(z)
    if np.any(mag <= MODULUS_FLOOR):
        raise ValueError("near-zero entry in a constant-modulus parameter")
    return z / mag


def repair_modulus(store: ParameterStore, re_name: str, im_name: str, rng: RngStream) -> int:
    """Re-draw entries whose magnitude fell below the floor; returns how many."""
    re, im = store[re_name].value, store[im_name].value
    bad = np.hypot(re, im) <= MODULUS_FLOOR
    n = int(bad.sum())
    if n:
        phase = rng.uniform(0, 2 * np.pi, n)
        re[bad], im[bad] = np.cos(phase), np.sin(phase)
        log.warning("re-initialized %d near-zero entries of %s/%s", n, re_name, im_name)
    return n


# --- layer objects ----------------------------------------------------------


class Layer:
    fan_in: int
    fan_out: int

    def init(self, store: ParameterStore, rng: RngStream) -> None:
        pass

    def forward(self, store: ParameterStore, x: Tensor, ctx: Ctx) -> Tensor:
        raise NotImplementedError

    def param_names(self) -> list[str]:
        return []


class Dense(Layer):
    def __init__(self, name: str, fan_in: int, fan_out: int):
        LayerSpec("dense", fan_in, fan_out)
        self.name, self.fan_in, self.fan_out = name, fan_in, fan_out

    def init(self, store, rng):
        lim = np.sqrt(6.0 / (self.fan_in + self.fan_out))
        store.add(f"{self.name}.W", rng.uniform(-lim, lim, (self.fan_out, self.fan_in)))
        store.add(f"{self.name}.b", np.zeros(self.fan_out))

    def forward(self, store, x, ctx):
        if x.shape[-1] != self.fan_in:
            raise ShapeError(f"{self.name}: input width {x.shape[-1]} != fan-in {self.fan_in}")
        return x @ ad.swap_last(store.tensor(f"{self.name}.W")) + store.tensor(f"{self.name}.b")

    def param_names(self):
        return [f"{self.name}.W", f"{self.name}.b"]


class Activation(Layer):
    def __init__(self, kind: str, width: int = 0):
        LayerSpec("activation", activation=kind)
        self.kind, self.fan_in, self.fan_out = kind, width, width

    def forward(self, store, x, ctx):
        return ACTIVATIONS[self.kind](x)


class BatchNorm(Layer):
    def __init__(self, name: str, width: int, momentum: float = 0.99, eps: float = 1e-5):
        self.name, self.fan_in, self.fan_out = name, width, width
        self.momentum, self.eps = momentum, eps

    def init(self, store, rng):
        store.add(f"{self.name}.gamma", np.ones(self.fan_in))
        store.add(f"{self.name}.beta", np.zeros(self.fan_in))
        store.buffers[f"{self.name}.mean"] = np.zeros(self.fan_in)
        store.buffers[f"{self.name}.var"] = np.ones(self.fan_in)

    def forward(self, store, x, ctx):
        gamma, beta = store.tensor(f"{self.name}.gamma"), store.tensor(f"{self.name}.beta")
        if ctx.training:
            if x.shape[0] < 2:
                raise UsageError("batch normalization needs a batch of at least 2 in training mode")
            mu = ad.mean(x, axis=0, keepdims=True)
            xc = x - mu
            var = ad.mean(xc * xc, axis=0, keepdims=True)
            xhat = xc / ad.sqrt(var + self.eps)
            m = self.momentum
            rm, rv = store.buffers[f"{self.name}.mean"], store.buffers[f"{self.name}.var"]
            rm *= m
            rm += (1 - m) * mu.value[0]
            rv *= m
            rv += (1 - m) * var.value[0]
        else:
            rm, rv = store.buffers[f"{self.name}.mean"], store.buffers[f"{self.name}.var"]
            xhat = (x - rm) * (1.0 / np.sqrt(rv + self.eps))
        return xhat * gamma + beta

    def param_names(self):
        return [f"{self.name}.gamma", f"{self.name}.beta"]


class Dropout(Layer):
    """Inverted dropout; identity outside training mode."""

    def __init__(self, rate: float, width: int = 0):
        LayerSpec("dropout", dropout=rate)
        self.rate, self.fan_in, self.fan_out = rate, width, width

    def forward(self, store, x, ctx):
        if not ctx.training or self.rate == 0.0:
            return x
        if ctx.rng is None:
            raise UsageError("dropout in training mode needs an rng")
        keep = (ctx.rng.uniform(0.0, 1.0, x.shape) >= self.rate) / (1.0 - self.rate)
        return x * keep


class Binary(Layer):
    def __init__(self, width: int = 0):
        self.fan_in = self.fan_out = width

    def forward(self, store, x, ctx):
        return binary_st(x, ctx.alpha, ctx.surrogate_forward)


class Sequential(Layer):
    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)
        self.fan_in = self.layers[0].fan_in
        self.fan_out = self.layers[-1].fan_out

    def init(self, store, rng):
        for layer in self.layers:
            layer.init(store, rng)

    def forward(self, store, x, ctx):
        for layer in self.layers:
            x = layer.forward(store, x, ctx)
        return x

    def param_names(self):
        return [n for layer in self.layers for n in layer.param_names()]


class Residual(Sequential):
    """``x + block(x)``; the block must preserve width."""

    def __init__(self, layers: Sequence[Layer]):
        super().__init__(layers)
        if self.fan_in != self.fan_out:
            raise ShapeError(f"residual block maps {self.fan_in} -> {self.fan_out}; widths must match")

    def forward(self, store, x, ctx):
        return x + super().forward(store, x, ctx)


def mlp(name: str, widths: Sequence[int], out: str = "none", *, batchnorm: bool = True, dropout: float = 0.0,
        residual: bool = False, hidden: str = "relu") -> Sequential:
    """Fully connected stack ``widths[0] -> ... -> widths[-1]``.

    Hidden layers are Dense -> BatchNorm -> activation -> Dropout. With
    ``residual`` a width-preserving residual block follows the first hidden
    layer. ``out`` is an activation name or ``"binary"``.
    """
    layers: list[Layer] = []
    n = len(widths) - 1
    for i in range(n):
        fi, fo = widths[i], widths[i + 1]
        layers.append(Dense(f"{name}.{i}", fi, fo))
        if i == n - 1:
            break
        if batchnorm:
            layers.append(BatchNorm(f"{name}.{i}.bn", fo))
        layers.append(Activation(hidden, fo))
        if residual and i == 0:
            block = [Dense(f"{name}.res", fo, fo)]
            if batchnorm:
                block.append(BatchNorm(f"{name}.res.bn", fo))
            block.append(Activation(hidden, fo))
            layers.append(Residual(block))
        if dropout > 0:
            layers.append(Dropout(dropout, fo))
    layers.append(Binary(widths[-1]) if out == "binary" else Activation(out, widths[-1]))
    return Sequential(layers)
