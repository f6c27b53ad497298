"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..numerics import RngStream
from .autodiff import Tensor, backward
from .store import ParameterStore

STEP = 1e-6
# Denominator floor: with h = 1e-6 the central difference carries an absolute
# round-off of order 1e-10 |f|, so gradients far below this floor cannot be
# compared relatively.
REL_FLOOR = 1e-4


@dataclass
class GradcheckReport:
    max_rel_err: float
    n_coords: int
    worst: tuple[str, tuple]

    def passed(self, tol: float = 1e-5) -> bool:
        return self.n_coords > 0 and self.max_rel_err <= tol


def rel_err(a: float, b: float, floor: float = REL_FLOOR) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def _pick(arrays: dict[str, np.ndarray], n: int, rng: RngStream) -> list[tuple[str, tuple]]:
    pool = [(k, np.unravel_index(i, a.shape)) for k, a in arrays.items() for i in range(a.size)]
    if len(pool) <= n:
        return pool
    idx = rng.generator.choice(len(pool), size=n, replace=False)
    return [pool[i] for i in np.sort(idx)]


def _compare(arrays, analytic, evaluate, n_coords, h, rng) -> GradcheckReport:
    worst, worst_at = 0.0, ("", ())
    coords = _pick(arrays, n_coords, rng)
    for name, ix in coords:
        a = arrays[name]
        keep = a[ix]
        a[ix] = keep + h
        fp = evaluate()
        a[ix] = keep - h
        fm = evaluate()
        a[ix] = keep
        num = (fp - fm) / (2 * h)
        e = rel_err(float(analytic[name][ix]), num)
        if e > worst:
            worst, worst_at = e, (name, tuple(int(i) for i in ix))
    return GradcheckReport(worst, len(coords), worst_at)


def gradcheck(fn: Callable[[dict[str, Tensor]], Tensor], inputs: dict[str, np.ndarray], n_coords: int = 64,
              h: float = STEP, seed: int = 0) -> GradcheckReport:
    """Check ``fn`` (dict of leaf tensors -> scalar tensor) w.r.t. every input array.

    ``fn`` must be deterministic: any randomness inside it has to be re-seeded
    on every call.
    """
    arrays = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    leaves = {k: Tensor(v.copy(), requires_grad=True) for k, v in arrays.items()}
    backward(fn(leaves))
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()}

    def evaluate():
        return float(fn({k: Tensor(v) for k, v in arrays.items()}).value)

    return _compare(arrays, analytic, evaluate, n_coords, h, RngStream(seed, 99))


def gradcheck_store(loss_fn: Callable[[ParameterStore], Tensor], store: ParameterStore, names=None,
                    n_coords: int = 64, h: float = STEP, seed: int = 0) -> GradcheckReport:
    """Same check against the parameters of ``store`` (perturbed in place, then restored).

    Buffers touched by ``loss_fn`` (batch-norm running statistics) are
    restored after every evaluation.
    """
    names = list(store.params) if names is None else list(names)
    snapshot = {k: v.copy() for k, v in store.buffers.items()}

    def restore():
        for k, v in snapshot.items():
            store.buffers[k][...] = v

    store.zero_grad()
    backward(loss_fn(store))
    restore()
    analytic = {n: store[n].grad.copy() for n in names}
    store.zero_grad()
    arrays = {n: store[n].value for n in names}

    def evaluate():
        out = float(loss_fn(store).value)
        restore()
        return out

    return _compare(arrays, analytic, evaluate, n_coords, h, RngStream(seed, 99))
