"""Training loops: single-timescale and alternating two-timescale."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..channel import DatasetConfig, LinkSource
from ..errors import ConfigError, NumericalError
from ..nngine import backward
from ..nngine.checkpoint import save_checkpoint
from ..nngine.layers import Ctx, anneal_slope
from ..nngine.store import adam_step
from ..numerics import DROPOUT, RngStream
from ..phy import ber
from .analog import SlidingWindow
from .models import TwoScaleSystem

log = logging.getLogger(__name__)


@dataclass
class TrainSchedule:
    epochs: int = 50
    steps_per_epoch: int = 40
    batch_size: int = 256
    lr: float = 1e-3
    lr_decay: float = 0.5  # multiplied in every ``lr_every`` epochs
    lr_every: int = 15
    alpha_start: float = 2.0
    alpha_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.steps_per_epoch < 1 or self.batch_size < 2:
            raise ConfigError("epochs and steps must be >= 1, batch size >= 2")
        if self.lr <= 0 or not 0 < self.lr_decay <= 1 or self.lr_every < 1:
            raise ConfigError("learning rates must be positive and non-increasing")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.lr_every)

    def alpha_at(self, epoch: int) -> float:
        return anneal_slope(epoch, self.alpha_start, self.alpha_rate)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochLog:
    epoch: int
    slot_type: str  # single | short | long
    bce: float
    ber: float
    alpha: float
    lr: float
    gamma: float = float("nan")


@dataclass
class TrainLog:
    rows: list[EpochLog] = field(default_factory=list)

    def series(self, slot_type: str) -> list[EpochLog]:
        return [r for r in self.rows if r.slot_type == slot_type]


def _check_finite(loss: float, system: TwoScaleSystem, where: str, diag_dir: Path | None) -> None:
    if np.isfinite(loss):
        return
    if diag_dir is not None:
        path = save_checkpoint(Path(diag_dir) / "diverged.ckpt", system.store, {"where": where})
        raise NumericalError(f"loss became {loss} at {where}; diagnostic checkpoint at {path}")
    raise NumericalError(f"loss became {loss} at {where}")


def _flat(bits):
    return bits.reshape(bits.shape[0], -1)


def train_single_timescale(system: TwoScaleSystem, data: DatasetConfig, schedule: TrainSchedule,
                           diag_dir: Path | None = None, names: list[str] | None = None,
                           frozen_buffers: list[str] = ()) -> TrainLog:
    """Long-term model run in every slot on i.i.d. channels (fresh batch per step).

    ``names`` limits the updated parameters; ``frozen_buffers`` are running
    statistics restored after every step (batch-norm layers of frozen nets).
    """
    rng = RngStream(schedule.seed, 0)
    src = LinkSource(rng.child(10), data)
    drop = rng.child(DROPOUT)
    names = names or system.names("long", "demod")
    out = TrainLog()
    for e in range(schedule.epochs):
        lr, alpha = schedule.lr_at(e), schedule.alpha_at(e)
        ctx = Ctx(training=True, rng=drop, alpha=alpha)
        losses, errs = [], []
        for s in range(schedule.steps_per_epoch):
            b = src.draw(schedule.batch_size)
            keep = {k: system.store.buffers[k].copy() for k in frozen_buffers}
            system.long.repair(system.store, drop)
            r = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, ctx)
            _check_finite(float(r.loss.value), system, f"epoch {e} step {s}", diag_dir)
            backward(r.loss)
            adam_step(system.store, lr, names=names)
            system.store.zero_grad()  # drop gradients that reached parameters outside ``names``
            for k, v in keep.items():
                system.store.buffers[k][...] = v
            losses.append(float(r.loss.value))
            errs.append(ber(_flat(b.bits), r.probs))
        out.rows.append(EpochLog(e, "single", float(np.mean(losses)), float(np.mean(errs)), alpha, lr))
        log.info("epoch %d  bce %.4f  ber %.4f  alpha %.2f  lr %.2e", e, out.rows[-1].bce, out.rows[-1].ber,
                 alpha, lr)
    return out


def train_two_timescale(system: TwoScaleSystem, data: DatasetConfig, schedule: TrainSchedule,
                        diag_dir: Path | None = None, frames: int | None = None) -> TrainLog:
    """Alternate short-term slots (analog stages fixed) and a long-term slot per frame.

    Each epoch runs ``steps_per_epoch`` frames in superframes of ``frames``
    frames. Within a superframe the angles of every batch trajectory stay
    fixed and the gains are redrawn each slot. A superframe opens with one
    long-term slot that supplies the first analog stages. During training the
    analog stages of a frame are the long-term network's phases from the
    preceding long slot; the moving-average update is an inference-time step.
    """
    dims = system.dims
    frames = frames or dims.frames
    rng = RngStream(schedule.seed, 0)
    src = LinkSource(rng.child(11), data)
    drop = rng.child(DROPOUT)
    long_names = system.names("long", "demod")
    short_names = system.names("short", "demod")
    out = TrainLog()
    for e in range(schedule.epochs):
        lr, alpha = schedule.lr_at(e), schedule.alpha_at(e)
        ctx = Ctx(training=True, rng=drop, alpha=alpha)
        acc = {"short": ([], []), "long": ([], [])}

        def long_slot(batch, window, tag):
            system.long.repair(system.store, drop)
            r = system.long.forward(system.store, system.demod, batch.h, batch.pilot_noise, batch.data_noise,
                                    batch.bits, ctx, window=window)
            _check_finite(float(r.loss.value), system, tag, diag_dir)
            backward(r.loss)
            adam_step(system.store, lr, names=long_names)
            acc["long"][0].append(float(r.loss.value))
            acc["long"][1].append(ber(_flat(batch.bits), r.probs))
            return r.precoders

        frame = 0
        while frame < schedule.steps_per_epoch:
            params = src.new_params(schedule.batch_size)
            window = SlidingWindow(system.long.window)
            pre = long_slot(src.draw(params=params), window, f"epoch {e} priming")
            for _ in range(min(frames, schedule.steps_per_epoch - frame)):
                for _slot in range(dims.slots - 1):
                    b = src.draw(params=params)
                    r = system.short.forward(system.store, system.demod, pre.f_rf, pre.w_rf, b.h, b.pilot_noise_eq,
                                             b.data_noise, b.bits, ctx)
                    _check_finite(float(r.loss.value), system, f"epoch {e} short slot", diag_dir)
                    backward(r.loss)
                    adam_step(system.store, lr, names=short_names)
                    acc["short"][0].append(float(r.loss.value))
                    acc["short"][1].append(ber(_flat(b.bits), r.probs))
                pre = long_slot(src.draw(params=params), window, f"epoch {e} long slot")
                frame += 1
        for kind in ("short", "long"):
            if acc[kind][0]:
                out.rows.append(EpochLog(e, kind, float(np.mean(acc[kind][0])), float(np.mean(acc[kind][1])),
                                         alpha, lr))
        log.info("epoch %d  short %.4f  long %.4f", e, out.rows[-2].bce, out.rows[-1].bce)
    return out
