"""Monte Carlo evaluation over superframes for learned and classical schemes.

Every scheme consumes the same draw pattern from one :class:`LinkSource`:
per block of trajectories a fresh set of angles, then one priming slot and
``frames * slots`` data slots whose gains are redrawn each slot. With equal
seeds, all schemes therefore see identical channels, noise and payloads.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..baselines.omp import angular_dictionary, omp_estimate, sensing_matrix
from ..baselines.overhead import signaling_overhead
from ..baselines.param_feedback import parameter_feedback_reconstruct
from ..baselines.precoding import svd_hybrid_precode
from ..channel import ChannelParams, DatasetConfig, LinkSource, SINGLE_TIMESCALE_DELAY_S, delay_for_scheme, \
    realize_delayed_channel
from ..errors import ConfigError, EmptyResultError
from ..nngine.layers import Ctx
from ..numerics import EVAL, RngStream, cgauss_array
from ..phy import PROB_EPS, PrecoderSet, modulate, pilot_rx_long, soft_demodulate, transmit_receive
from .analog import LongTermPhaseState, SlidingWindow, update_long_term_phases
from .dims import SystemDims
from .models import TwoScaleSystem

log = logging.getLogger(__name__)

SCHEMES = ("dnn-two", "dnn-single", "svd-perfect", "svd-omp", "identity")
Z95 = 1.959963984540054
DEFAULT_DOPPLER_HZ = 100.0


@dataclass
class DelaySettings:
    """CSI delay knob: ``tau = tau_single * Q_scheme / Q_s``."""

    doppler_hz: float = DEFAULT_DOPPLER_HZ
    tau_single: float = SINGLE_TIMESCALE_DELAY_S


@dataclass
class EvalResult:
    scheme: str
    n_samples: int  # symbol vectors evaluated
    n_bits: int
    bit_errors: int
    ber: float
    ber_ci: float  # 95% normal-approximation half-width
    bce: float
    bce_ci: float
    short_forwards: int = 0
    long_forwards: int = 0
    priming_forwards: int = 0
    signaling_bits: int = 0  # per trajectory per superframe
    delay_s: float = 0.0


@dataclass
class _Acc:
    errors: int = 0
    bits: int = 0
    bce_sum: float = 0.0
    bce_sq: float = 0.0
    n: int = 0

    def add(self, labels: np.ndarray, probs: np.ndarray) -> None:
        labels = labels.reshape(labels.shape[0], -1).astype(float)
        probs = probs.reshape(probs.shape[0], -1)
        p = np.clip(probs, PROB_EPS, 1 - PROB_EPS)
        per = -(labels * np.log(p) + (1 - labels) * np.log1p(-p)).sum(axis=1)
        self.errors += int(np.count_nonzero((probs >= 0.5) != (labels > 0.5)))
        self.bits += labels.size
        self.bce_sum += float(per.sum())
        self.bce_sq += float((per**2).sum())
        self.n += labels.shape[0]


def _ci(acc: _Acc) -> tuple[float, float, float, float]:
    p = acc.errors / acc.bits
    mean = acc.bce_sum / acc.n
    var = max(acc.bce_sq / acc.n - mean**2, 0.0)
    return p, Z95 * math.sqrt(p * (1 - p) / acc.bits), mean, Z95 * math.sqrt(var / acc.n)


def omp_feedback_bits(dims: SystemDims, data: DatasetConfig) -> int:
    """Per-slot parameter-feedback budget: ``B``, raised to one bit per ray parameter if needed."""
    need = 4 * data.n_clusters * data.n_rays
    if dims.bits < need:
        log.info("parameter feedback raised from %d to %d bits (one per ray parameter)", dims.bits, need)
    return max(dims.bits, need)


def scheme_overhead(scheme: str, dims: SystemDims, omp_bits: int = 0) -> int:
    """Signaling bits per superframe for each evaluated scheme.

    Parameter feedback sends ``omp_bits`` every slot, so it follows the
    single-timescale formula with ``B = omp_bits``.
    """
    kw = dict(n_r=dims.n_r, n_t=dims.n_t, n_r_rf=dims.n_r_rf, n_t_rf=dims.n_t_rf, b=dims.bits, b_t=dims.bits_eq)
    if scheme in ("dnn-two", "dnn-single"):
        return signaling_overhead(scheme, dims.frames, dims.slots, **kw)
    if scheme == "svd-omp":
        kw["b"] = omp_bits
        return signaling_overhead("dnn-single", dims.frames, dims.slots, **kw)
    return 0


def scheme_delay(scheme: str, dims: SystemDims, delay: DelaySettings | None, omp_bits: int = 0) -> float:
    if delay is None:
        return 0.0
    if scheme in ("svd-perfect", "identity"):
        return delay.tau_single
    q_s = scheme_overhead("dnn-single", dims)
    return delay_for_scheme(delay.tau_single, scheme_overhead(scheme, dims, omp_bits), q_s)


# --- classical estimation chain ----------------------------------------------


class _OmpChain:
    """Fixed random pilots, OMP estimate, per-ray parameter feedback."""

    def __init__(self, dims: SystemDims, data: DatasetConfig, rng: RngStream, total_bits: int):
        d = dims
        self.dims, self.cfg = d, data
        self.x = cgauss_array(rng, (d.n_t_rf, d.pilot_len))
        self.x /= np.linalg.norm(self.x, axis=0, keepdims=True)
        self.f = np.exp(1j * rng.uniform(0, 2 * np.pi, (d.pilot_len, d.n_t, d.n_t_rf))) / np.sqrt(d.n_t)
        self.w = np.exp(1j * rng.uniform(0, 2 * np.pi, (d.pilot_len, d.n_r, d.n_r_rf))) / np.sqrt(d.n_r)
        self.dictionary = angular_dictionary(d.n_t, d.n_r)
        self.psi = self.dictionary.atoms()
        self.phi = sensing_matrix(self.x, self.f, self.w)
        self.k = data.n_clusters * data.n_rays
        self.sparsity = min(self.k, d.n_r_rf * d.pilot_len)
        self.total_bits = total_bits

    def estimate(self, h: np.ndarray, pilot_noise: np.ndarray) -> np.ndarray:
        d = self.dims
        y = pilot_rx_long(h, self.x, self.f, self.w, pilot_noise)  # (b, N_r^RF, L)
        scale = np.sqrt(d.n_t * d.n_r / self.k)
        out = np.empty_like(h)
        for i in range(h.shape[0]):
            res = omp_estimate(y[i].T.ravel(), self.phi, self.dictionary, self.sparsity, atoms=self.psi)
            gains = np.zeros(self.k, complex)
            aoa = np.zeros(self.k)
            aod = np.zeros(self.k)
            n = len(res.atoms)
            gains[:n] = res.coeffs / scale
            aoa[:n], aod[:n] = self.dictionary.atom_angles(np.array(res.atoms, dtype=int))
            shape = (self.cfg.n_clusters, self.cfg.n_rays)
            params = ChannelParams(gains.reshape(shape), aoa.reshape(shape), aod.reshape(shape))
            out[i] = parameter_feedback_reconstruct(params, self.total_bits, d.n_t, d.n_r)
        return out


# --- main loop ----------------------------------------------------------------


def evaluate(scheme: str, dims: SystemDims, data, n_samples: int, *, system: TwoScaleSystem | None = None,
             seed: int = 0, delay: DelaySettings | None = None, q_rf: int | None = None,
             active_len: int | None = None, active_len_eq: int | None = None, rf_active: tuple[int, int] | None = None,
             chunk: int = 256) -> EvalResult:
    """BER / BCE of ``scheme`` over at least ``n_samples`` symbol vectors.

    Trajectories of ``frames * slots`` data slots are simulated until the
    sample count is reached. For ``dnn-two`` each frame runs ``slots - 1``
    short-term slots and then one long-term slot whose applied phases follow
    the moving-average state; a priming long-term slot opens each superframe
    and is excluded from the metrics and signaling count. Precoders are
    designed from the pilot-time channel and the data travel over the delayed
    channel when ``delay`` is given.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if n_samples <= 0:
        raise EmptyResultError("n_samples must be positive")
    if scheme.startswith("dnn") and system is None:
        raise ConfigError(f"scheme {scheme} needs a trained system")
    d = dims
    q_rf = d.q_rf if q_rf is None else q_rf
    cfg = DatasetConfig.from_object(data)
    per_traj = d.frames * d.slots
    n_traj = -(-n_samples // per_traj)
    omp_bits = omp_feedback_bits(d, cfg)
    tau = scheme_delay(scheme, d, delay, omp_bits)
    fd = delay.doppler_hz if delay is not None else 0.0
    rng = RngStream(seed, EVAL)
    src = LinkSource(rng.child(1), cfg)
    nv = src.noise_var
    omp = _OmpChain(d, cfg, rng.child(2), omp_bits) if scheme == "svd-omp" else None
    ctx = Ctx(training=False)
    acc = _Acc()
    counts = {"short": 0, "long": 0, "priming": 0, "fb_bits": 0}

    def data_channel(b):
        return b.h if tau == 0 else realize_delayed_channel(b.params, cfg.n_t, cfg.n_r, fd, tau)

    def classical(b, h_design):
        sol = svd_hybrid_precode(h_design, d.n_t_rf, d.n_r_rf, d.n_s, noise_var=nv)
        s = modulate(b.bits, d.mod_order)
        r = transmit_receive(data_channel(b), sol.precoders, s, b.data_noise)
        return soft_demodulate(r, d.mod_order, sol.post_noise_var)

    def identity(b):
        eye = np.broadcast_to(np.eye(d.n_s, dtype=complex), (len(b), d.n_s, d.n_s))
        p = PrecoderSet(eye, eye, eye, eye)
        s = modulate(b.bits, d.mod_order)
        r = transmit_receive(eye, p, s, b.data_noise[:, : d.n_s])
        return soft_demodulate(r, d.mod_order, nv)

    done = 0
    while done < n_traj:
        m = min(chunk, n_traj - done)
        params = src.new_params(m)
        window = SlidingWindow(system.long.window) if system is not None else None
        state = None
        # priming slot: always drawn so every scheme sees the same stream
        b = src.draw(params=params)
        if scheme == "dnn-two":
            state = LongTermPhaseState(np.zeros((m, d.n_t * d.n_t_rf)), np.zeros((m, d.n_r * d.n_r_rf)))
            holder = {}

            def ma(pf, pw):
                holder["s"] = update_long_term_phases(holder["s"], pf, pw)
                return holder["s"].phi_f, holder["s"].phi_w

            holder["s"] = state
            r = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, ctx,
                                    h_data=data_channel(b), window=window, phase_fn=ma, q_rf=q_rf,
                                    active_len=active_len, rf_active=rf_active)
            pre = r.precoders
            counts["priming"] += 1
        for _frame in range(d.frames):
            for slot in range(d.slots):
                b = src.draw(params=params)
                hd = data_channel(b)
                if scheme == "dnn-two":
                    if slot < d.slots - 1:
                        r = system.short.forward(system.store, system.demod, pre.f_rf, pre.w_rf, b.h,
                                                 b.pilot_noise_eq, b.data_noise, b.bits, ctx, h_data=hd,
                                                 active_len=active_len_eq, rf_active=rf_active)
                        counts["short"] += 1
                    else:
                        r = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise,
                                                b.bits, ctx, h_data=hd, window=window, phase_fn=ma, q_rf=q_rf,
                                                active_len=active_len, rf_active=rf_active)
                        pre = r.precoders
                        counts["long"] += 1
                    counts["fb_bits"] += r.feedback.shape[-1]
                    probs = r.probs
                elif scheme == "dnn-single":
                    r = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits,
                                            ctx, h_data=hd, window=window, q_rf=q_rf, active_len=active_len,
                                            rf_active=rf_active)
                    counts["long"] += 1
                    counts["fb_bits"] += r.feedback.shape[-1]
                    probs = r.probs
                elif scheme == "svd-perfect":
                    probs = classical(b, b.h)
                elif scheme == "svd-omp":
                    probs = classical(b, omp.estimate(b.h, b.pilot_noise))
                    counts["fb_bits"] += omp.total_bits
                else:
                    probs = identity(b)
                acc.add(b.bits, probs)
        done += m
    n_blocks = -(-n_traj // chunk)
    ber_, ber_ci, bce, bce_ci = _ci(acc)
    return EvalResult(scheme, acc.n, acc.bits, acc.errors, ber_, ber_ci, bce, bce_ci, counts["short"],
                      counts["long"], counts["priming"], counts["fb_bits"] // n_blocks, tau)
