"""System checkpoints: parameter store plus dims, build options and phase state."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..nngine.checkpoint import load_checkpoint, save_checkpoint
from .analog import LongTermPhaseState
from .dims import SystemDims
from .models import Demodulator, LongTermModel, NetOptions, ShortTermModel, TwoScaleSystem


def save_system(path, system: TwoScaleSystem, schedule: dict | None = None,
                phase_state: LongTermPhaseState | None = None, extra: dict | None = None) -> Path:
    long = system.long
    meta = {
        "dims": system.dims.to_dict(),
        "opts": asdict(long.opts),
        "window": long.window,
        "feedback": long.feedback,
        "code_width": long.code_width,
        "user": extra or {},
    }
    arrays = {}
    if phase_state is not None:
        arrays = {"phase/phi_f": phase_state.phi_f, "phase/phi_w": phase_state.phi_w}
        meta["phase"] = {"t": phase_state.t, "exponent": phase_state.exponent}
    return save_checkpoint(path, system.store, schedule, arrays, meta)


def load_system(path) -> tuple[TwoScaleSystem, dict, LongTermPhaseState | None]:
    """Rebuild the system saved by :func:`save_system` (bit-exact parameters and buffers)."""
    store, meta, arrays = load_checkpoint(path)
    info = meta.get("extra", {})
    if "dims" not in info:
        raise ConfigError(f"{path} is a bare parameter checkpoint, not a system checkpoint")
    dims = SystemDims(**info["dims"])
    opts = NetOptions(**info["opts"])
    long = LongTermModel(dims, opts, window=info["window"], feedback=info["feedback"],
                         code_width=info["code_width"])
    system = TwoScaleSystem(dims, long, ShortTermModel(dims, opts), Demodulator(dims, opts), store)
    state = None
    if "phase" in info:
        state = LongTermPhaseState(np.asarray(arrays["phase/phi_f"]), np.asarray(arrays["phase/phi_w"]),
                                   int(info["phase"]["t"]), float(info["phase"]["exponent"]))
    return system, meta, state
