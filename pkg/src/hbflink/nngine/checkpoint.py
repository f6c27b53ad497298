"""Checkpoints: a :class:`ParameterStore` in the array container.

Array names are ``param/<name>/{value,m,v}`` and ``buffer/<name>``. The
header ``meta`` carries ``steps`` (per-parameter Adam step counters),
``trainable`` flags, ``schedule`` (free-form position record such as
epoch and slope) and any caller ``extra`` entries. Payloads are stored
verbatim, so a round trip is bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import container
from ..errors import IntegrityError
from .store import ParameterStore


def store_to_arrays(store: ParameterStore) -> tuple[dict[str, np.ndarray], dict]:
    arrays: dict[str, np.ndarray] = {}
    steps, trainable = {}, {}
    for n, p in store.params.items():
        arrays[f"param/{n}/value"] = p.value
        arrays[f"param/{n}/m"] = p.m
        arrays[f"param/{n}/v"] = p.v
        steps[n] = p.step
        trainable[n] = p.trainable
    for n, b in store.buffers.items():
        arrays[f"buffer/{n}"] = b
    return arrays, {"steps": steps, "trainable": trainable}


def store_from_arrays(arrays: dict[str, np.ndarray], meta: dict) -> ParameterStore:
    store = ParameterStore()
    try:
        for n, step in meta["steps"].items():
            p = store.add(n, arrays[f"param/{n}/value"])
            p.m = arrays[f"param/{n}/m"].copy()
            p.v = arrays[f"param/{n}/v"].copy()
            p.step = int(step)
            p.trainable = bool(meta["trainable"][n])
    except KeyError as exc:
        raise IntegrityError(f"checkpoint is missing entry {exc}") from exc
    for key, a in arrays.items():
        if key.startswith("buffer/"):
            store.buffers[key[len("buffer/"):]] = a.copy()
    return store


def save_checkpoint(path, store: ParameterStore, schedule: dict | None = None,
                    extra_arrays: dict[str, np.ndarray] | None = None, extra: dict | None = None) -> Path:
    arrays, meta = store_to_arrays(store)
    for k, a in (extra_arrays or {}).items():
        arrays[f"extra/{k}"] = a
    meta["schedule"] = schedule or {}
    meta["extra"] = extra or {}
    path = Path(path)
    container.save(path, arrays, meta)
    return path


def load_checkpoint(path) -> tuple[ParameterStore, dict, dict[str, np.ndarray]]:
    """Returns ``(store, meta, extra_arrays)``."""
    arrays, meta = container.load(path)
    store = store_from_arrays(arrays, meta)
    extra = {k[len("extra/"):]: a.copy() for k, a in arrays.items() if k.startswith("extra/")}
    return store, meta, extra


def stores_equal(a: ParameterStore, b: ParameterStore) -> bool:
    """Bit-exact equality of values, moments, steps and buffers."""
    if set(a.params) != set(b.params) or set(a.buffers) != set(b.buffers):
        return False
    for n, p in a.params.items():
        q = b.params[n]
        if p.step != q.step or p.trainable != q.trainable:
            return False
        for x, y in ((p.value, q.value), (p.m, q.m), (p.v, q.v)):
            if x.shape != y.shape or x.tobytes() != y.tobytes():
                return False
    return all(a.buffers[k].tobytes() == b.buffers[k].tobytes() for k in a.buffers)
