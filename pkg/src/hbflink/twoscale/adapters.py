"""Generalization adapters: reduced RF dims, variable feedback bits, transfer fine-tuning."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from ..baselines.lloyd_max import ScalarCodebook, lloyd_max_train, quantize, uniform_codebook
from ..channel import DatasetConfig, LinkSource
from ..errors import ConfigError, DomainError
from ..nngine import autodiff as ad
from ..nngine import backward
from ..nngine.layers import Ctx
from ..nngine.store import adam_step
from ..numerics import DROPOUT, RngStream
from ..phy import PrecoderSet
from .models import TwoScaleSystem
from .training import TrainLog, TrainSchedule, train_single_timescale

log = logging.getLogger(__name__)

ZERO_VAR = 1e-12


# --- reduced RF chains --------------------------------------------------------


def zero_pad_rf(h_eq, precoders: PrecoderSet, target: tuple[int, int]) -> tuple[np.ndarray, PrecoderSet]:
    """Run a model built for ``(N_t0^RF, N_r0^RF)`` with only ``target`` chains active.

    ``h_eq`` is the ``N_r1^RF x N_t1^RF`` equivalent channel of the smaller
    system; it is embedded top-left in an ``N_r0^RF x N_t0^RF`` zero matrix.
    Analog columns and digital rows beyond the active chains are zeroed.
    """
    h_eq = np.asarray(h_eq)
    nt0, nr0 = precoders.f_rf.shape[-1], precoders.w_rf.shape[-1]
    nt1, nr1 = target
    if nt1 > nt0 or nr1 > nr0 or nt1 < 1 or nr1 < 1:
        raise DomainError(f"target RF dims {target} must lie within the source dims {(nt0, nr0)}")
    if h_eq.shape[-2:] != (nr1, nt1):
        raise DomainError(f"equivalent channel shape {h_eq.shape[-2:]} != {(nr1, nt1)}")
    out = np.zeros(h_eq.shape[:-2] + (nr0, nt0), dtype=np.result_type(h_eq, np.complex128))
    out[..., :nr1, :nt1] = h_eq
    f_rf, w_rf = precoders.f_rf.copy(), precoders.w_rf.copy()
    f_bb, w_bb = precoders.f_bb.copy(), precoders.w_bb.copy()
    f_rf[..., :, nt1:] = 0
    w_rf[..., :, nr1:] = 0
    f_bb[..., nt1:, :] = 0
    w_bb[..., nr1:, :] = 0
    return out, PrecoderSet(f_rf, f_bb, w_rf, w_bb)


# --- two-step feedback quantizer ----------------------------------------------


@dataclass
class TwoStepResult:
    code_width: int  # P
    codebooks: dict[int, list[ScalarCodebook]] = field(default_factory=dict)  # Q -> one per neuron
    heads: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)  # Q -> transmitter params; 0 = tanh
    step1_log: TrainLog | None = None
    step2_logs: dict[int, TrainLog] = field(default_factory=dict)

    def bits(self, q: int) -> int:
        return self.code_width * q


def fit_code_codebooks(codes: np.ndarray, q_bits: int) -> list[ScalarCodebook]:
    """Lloyd-Max codebook per code neuron; constant neurons fall back to a uniform grid."""
    books = []
    for j in range(codes.shape[1]):
        c = codes[:, j]
        if np.var(c) <= ZERO_VAR or np.unique(c).size < 2**q_bits:
            log.warning("code neuron %d is degenerate (var %.3g); using a uniform codebook", j, np.var(c))
            books.append(uniform_codebook(q_bits, -1.0, 1.0))
        else:
            books.append(lloyd_max_train(c, q_bits))
    return books


def code_quantizer(books: list[ScalarCodebook]) -> Callable[[np.ndarray], np.ndarray]:
    def fn(codes: np.ndarray) -> np.ndarray:
        out = np.empty_like(codes)
        for j, cb in enumerate(books):
            out[..., j] = quantize(cb, codes[..., j])[1]
        return out

    return fn


def _tx_names(system: TwoScaleSystem) -> list[str]:
    return [n for net in system.long.tx_nets for n in net.param_names()]


def collect_codes(system: TwoScaleSystem, data: DatasetConfig, n: int, seed: int) -> np.ndarray:
    """Unquantized code neuron outputs on fresh channels (inference mode)."""
    src = LinkSource(RngStream(seed, 0).child(12), data)
    b = src.draw(n)
    long = system.long
    saved, long.code_quantizer = long.code_quantizer, None
    try:
        y = long.received_pilots(system.store, b.h, b.pilot_noise)
        return long.fb.forward(system.store, ad.to_real(y), Ctx()).value
    finally:
        long.code_quantizer = saved


def two_step_feedback_training(system: TwoScaleSystem, data: DatasetConfig, q_list: Iterable[int],
                               step1: TrainSchedule, step2: TrainSchedule, n_fit: int = 20000,
                               train_step1: bool = True) -> TwoStepResult:
    """Train tanh codes once, then fit per-neuron quantizers and retrain the transmitter per Q.

    ``system`` must be built with ``feedback="tanh"``. One receiver (pilots
    and feedback net) serves every Q; for each Q the transmitter nets start
    from the step-one weights and are retrained with the feedback net frozen.
    ``apply_head`` switches the system to a given Q.
    """
    if system.long.feedback != "tanh":
        raise ConfigError("two-step training needs a long-term model with tanh code neurons")
    q_list = list(q_list)
    if not q_list or min(q_list) < 1:
        raise ConfigError("each Q must be >= 1")
    res = TwoStepResult(system.long.code_width)
    if train_step1:
        res.step1_log = train_single_timescale(system, data, step1)
    codes = collect_codes(system, data, n_fit, step1.seed + 1)
    tx = _tx_names(system)
    base = {n: system.store[n].value.copy() for n in tx}
    base_adam = {n: (system.store[n].m.copy(), system.store[n].v.copy(), system.store[n].step) for n in tx}
    res.heads[0] = base
    rx_buffers = [k for k in system.store.buffers if k.startswith((f"{system.long.prefix}/fb.", "demod/"))]
    for q in q_list:
        res.codebooks[q] = fit_code_codebooks(codes, q)
        for n in tx:
            p = system.store[n]
            p.value[...] = base[n]
            p.m[...], p.v[...], p.step = base_adam[n][0], base_adam[n][1], base_adam[n][2]
        system.long.code_quantizer = code_quantizer(res.codebooks[q])
        res.step2_logs[q] = train_single_timescale(system, data, step2, names=tx, frozen_buffers=rx_buffers)
        res.heads[q] = {n: system.store[n].value.copy() for n in tx}
    apply_head(system, res, None)
    return res


def apply_head(system: TwoScaleSystem, result: TwoStepResult, q: int | None) -> None:
    """Load the Q-bit transmitter head and its quantizer; ``None`` selects the unquantized tanh path."""
    key = 0 if q is None else q
    if key not in result.heads:
        raise ConfigError(f"no head trained for Q = {q}")
    for n, v in result.heads[key].items():
        system.store[n].value[...] = v
    system.long.code_quantizer = None if q is None else code_quantizer(result.codebooks[q])


# --- transfer fine-tuning -----------------------------------------------------


def drifted(data: DatasetConfig, aoa_deg: float = 10.0, aod_deg: float = 0.0) -> DatasetConfig:
    """Same link with shifted angle-of-arrival / departure centers."""
    if data.stats.half_width >= np.pi / 2:
        log.warning("angle half-width is pi/2; a shifted center leaves the wrapped distribution unchanged")
    return replace(data, stats=data.stats.shifted(aoa_deg, aod_deg))


def last_layer_policy(system: TwoScaleSystem) -> Callable[[str], bool]:
    """Freeze everything except the output layers of the transmitter nets and the demodulator."""
    keep = set()
    for net in system.long.tx_nets + [system.demod.net]:
        keep.update(net.layers[-2].param_names())
    return lambda name: name not in keep


@dataclass
class FinetuneResult:
    trace: list[float]
    trainable: list[str]


def transfer_finetune(system: TwoScaleSystem, data: DatasetConfig, frozen: Callable[[str], bool], steps: int,
                      lr: float = 1e-3, batch_size: int = 256, seed: int = 0, alpha: float = 10.0
                      ) -> FinetuneResult:
    """Adapt the long-term path to drifted channel statistics with most layers frozen.

    ``frozen(name)`` says whether a parameter stays fixed. Frozen parameters
    and the running statistics of frozen batch-norm layers are left
    bit-exactly unchanged.
    """
    names = system.names("long", "demod")
    trainable = [n for n in names if not frozen(n)]
    if not trainable:
        raise ConfigError("the frozen-layer policy leaves nothing to train")
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    store = system.store
    locked = [k for k in store.buffers if frozen(k.rsplit(".", 1)[0] + ".gamma")]
    rng = RngStream(seed, 0)
    src = LinkSource(rng.child(13), data)
    ctx = Ctx(training=True, rng=rng.child(DROPOUT), alpha=alpha)
    trace = []
    for _ in range(steps):
        b = src.draw(batch_size)
        keep = {k: store.buffers[k].copy() for k in locked}
        r = system.long.forward(store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, ctx)
        backward(r.loss)
        adam_step(store, lr, names=trainable)
        store.zero_grad()
        for k, v in keep.items():
            store.buffers[k][...] = v
        trace.append(float(r.loss.value))
    return FinetuneResult(trace, trainable)


__all__ = [
    "FinetuneResult", "TwoStepResult", "apply_head", "code_quantizer", "collect_codes",
    "drifted", "fit_code_codebooks", "last_layer_policy", "transfer_finetune", "two_step_feedback_training",
    "zero_pad_rf",
]
