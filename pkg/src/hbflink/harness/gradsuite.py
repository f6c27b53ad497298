"""Finite-difference checks for every layer kind of the engine."""

from __future__ import annotations

from typing import Callable

from ..nngine import autodiff as ad
from ..nngine.autodiff import CTensor
from ..nngine.gradcheck import GradcheckReport, gradcheck, gradcheck_store
from ..nngine.layers import (Activation, BatchNorm, Binary, Ctx, Dense, Dropout, Residual, Sequential,
                             constant_modulus)
from ..nngine.store import ParameterStore
from ..numerics import RngStream

N_COORDS = 64
TOL = 1e-5


def _weighted(out, w):
    """Scalar ``sum(out * w)`` so every output coordinate carries a distinct weight."""
    return ad.sum(out * w)


def _layer_check(layer, width_in: int, width_out: int, seed: int, ctx_fn: Callable[[], Ctx],
                 batch: int = 8, x_scale: float = 1.0) -> GradcheckReport:
    rng = RngStream(seed, 40)
    store = ParameterStore()
    layer.init(store, rng)
    x0 = rng.normal((batch, width_in)) * x_scale
    w = rng.normal((batch, width_out))
    key = "__x"
    store.add(key, x0)

    def loss(st):
        return _weighted(layer.forward(st, st.tensor(key), ctx_fn()), w)

    return gradcheck_store(loss, store, n_coords=N_COORDS, seed=seed)


def _dense_stack(kind: str, seed: int) -> GradcheckReport:
    return _layer_check(Sequential([Dense("d", 6, 5), Activation(kind, 5)]), 6, 5, seed, Ctx)


def check_dense(seed=0):
    return _layer_check(Dense("d", 6, 5), 6, 5, seed, Ctx)


def check_batchnorm(seed=0):
    return _layer_check(BatchNorm("bn", 5), 5, 5, seed, lambda: Ctx(training=True), batch=16)


def check_dropout(seed=0):
    # the mask is re-drawn from the same seed on every evaluation
    return _layer_check(Sequential([Dense("d", 6, 5), Dropout(0.3, 5)]), 6, 5, seed,
                        lambda: Ctx(training=True, rng=RngStream(seed, 41)))


def check_residual(seed=0):
    block = Residual([Dense("r", 5, 5), BatchNorm("r.bn", 5), Activation("tanh", 5)])
    return _layer_check(block, 5, 5, seed, lambda: Ctx(training=True))


def check_binary_surrogate(seed=0):
    layer = Sequential([Dense("d", 6, 5), Binary(5)])
    return _layer_check(layer, 6, 5, seed, lambda: Ctx(alpha=2.5, surrogate_forward=True))


def check_constant_modulus(seed=0):
    """Pilot analog matrices ``z / |z|`` driving a complex product and a power readout."""
    rng = RngStream(seed, 42)
    shape = (4, 4, 2)
    x = rng.normal((4, 2, 1)) + 1j * rng.normal((4, 2, 1))
    h = rng.normal((5, 4)) + 1j * rng.normal((5, 4))
    wts = rng.normal((4, 5, 1))

    def fn(t):
        f = constant_modulus(CTensor(t["re"], t["im"])).scale(0.5)
        y = CTensor.const(h) @ (f @ CTensor.const(x))
        return ad.sum(y.abs2() * wts) + ad.sum(y.re * wts)

    return gradcheck(fn, {"re": rng.normal(shape), "im": rng.normal(shape)}, n_coords=N_COORDS, seed=seed)


def check_bce_logits(seed=0):
    rng = RngStream(seed, 43)
    labels = (rng.uniform(size=(16, 4)) > 0.5).astype(float)
    return gradcheck(lambda t: ad.sigmoid_bce_with_logits(t["z"], labels), {"z": rng.normal((16, 4)) * 2},
                     n_coords=N_COORDS, seed=seed)


def check_complex_chain(seed=0):
    """vec / unvec, Hermitian products and real stacking used by the precoding path."""
    rng = RngStream(seed, 44)
    a = rng.normal((4, 3)) + 1j * rng.normal((4, 3))
    w = rng.normal((6, 8))

    def fn(t):
        v = ad.from_real(t["v"])
        m = ad.cunvec(v, 3, 2)
        g = CTensor.const(a) @ m
        return ad.sum(ad.to_real(ad.cvec(g.H @ g)) * w)

    return gradcheck(fn, {"v": rng.normal((6, 12))}, n_coords=N_COORDS, seed=seed)


SUITE: dict[str, Callable[..., GradcheckReport]] = {
    "dense": check_dense,
    "relu": lambda seed=0: _dense_stack("relu", seed),
    "sigmoid": lambda seed=0: _dense_stack("sigmoid", seed),
    "tanh": lambda seed=0: _dense_stack("tanh", seed),
    "batchnorm": check_batchnorm,
    "dropout": check_dropout,
    "residual": check_residual,
    "binary-surrogate": check_binary_surrogate,
    "constant-modulus": check_constant_modulus,
    "bce-logits": check_bce_logits,
    "complex-chain": check_complex_chain,
}


def run_gradient_suite(seed: int = 0) -> dict[str, GradcheckReport]:
    return {name: fn(seed=seed) for name, fn in SUITE.items()}
