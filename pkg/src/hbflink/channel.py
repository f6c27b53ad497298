"""Clustered narrowband mmWave channel model.

All array-valued fields of :class:`ChannelParams` may carry leading batch
axes; every function here broadcasts over them, so one call can realize a
whole training batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import container
from .errors import DomainError, ShapeError
from .numerics import CHANNEL, DATA, NOISE, RngStream, cgauss_array

log = logging.getLogger(__name__)

DEFAULT_SPACING = 0.5
SINGLE_TIMESCALE_DELAY_S = 1e-3


def wrap_angle(phi):
    """Map angles into (-pi/2, pi/2] with period pi."""
    phi = np.asarray(phi, dtype=float)
    out = np.mod(phi + np.pi / 2, np.pi) - np.pi / 2
    return np.where(out <= -np.pi / 2, out + np.pi, out)


@dataclass(frozen=True)
class ChannelStatistics:
    """Angle distribution of a superframe.

    The default (centers 0, half-width pi/2) is the plain uniform
    (-pi/2, pi/2) draw. Shifting a center is the drift knob used for
    transfer-learning runs; it only changes the distribution when the
    half-width is below pi/2.
    """

    aoa_center: float = 0.0
    aod_center: float = 0.0
    half_width: float = np.pi / 2

    def shifted(self, aoa_deg: float = 0.0, aod_deg: float = 0.0) -> "ChannelStatistics":
        return ChannelStatistics(
            self.aoa_center + np.deg2rad(aoa_deg), self.aod_center + np.deg2rad(aod_deg), self.half_width
        )


@dataclass
class ChannelParams:
    gains: np.ndarray  # (..., N_cl, N_ray) complex
    aoa: np.ndarray  # (..., N_cl, N_ray) radians
    aod: np.ndarray
    spacing: float = DEFAULT_SPACING

    @property
    def n_clusters(self) -> int:
        return self.gains.shape[-2]

    @property
    def n_rays(self) -> int:
        return self.gains.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.gains.shape[:-2]

    def with_gains(self, gains: np.ndarray) -> "ChannelParams":
        return ChannelParams(gains, self.aoa, self.aod, self.spacing)

    def __getitem__(self, idx) -> "ChannelParams":
        return ChannelParams(self.gains[idx], self.aoa[idx], self.aod[idx], self.spacing)


@dataclass
class ChannelSample:
    params: ChannelParams
    h: np.ndarray
    h_delayed: np.ndarray | None = None
    delay_s: float = 0.0
    doppler_hz: float = 0.0


def array_response(n_antennas: int, phi, spacing: float = DEFAULT_SPACING) -> np.ndarray:
    """ULA steering vector(s), unit norm.

    For scalar ``phi`` the result is an ``(n, 1)`` column; for an array of
    angles of shape ``S`` it is ``S + (n,)``.
    """
    if n_antennas < 1:
        raise DomainError(f"n_antennas must be >= 1, got {n_antennas}")
    phi_arr = np.asarray(phi, dtype=float)
    k = np.arange(n_antennas)
    a = np.exp(-2j * np.pi * spacing * np.sin(phi_arr)[..., None] * k) / np.sqrt(n_antennas)
    if phi_arr.ndim == 0:
        return a.reshape(n_antennas, 1)
    return a


def sample_channel_params(
    rng: RngStream,
    n_clusters: int,
    n_rays: int,
    batch_shape: tuple = (),
    stats: ChannelStatistics | None = None,
    spacing: float = DEFAULT_SPACING,
) -> ChannelParams:
    if n_clusters < 1 or n_rays < 1:
        raise DomainError("need at least one cluster and one ray")
    stats = stats or ChannelStatistics()
    shape = tuple(batch_shape) + (n_clusters, n_rays)
    gains = cgauss_array(rng, shape, 1.0)
    w = stats.half_width
    aoa = wrap_angle(stats.aoa_center + rng.uniform(-w, w, shape))
    aod = wrap_angle(stats.aod_center + rng.uniform(-w, w, shape))
    return ChannelParams(gains, aoa, aod, spacing)


def redraw_gains(rng: RngStream, params: ChannelParams) -> ChannelParams:
    """Same angles, fresh CN(0, 1) gains (a new slot within the superframe)."""
    return params.with_gains(cgauss_array(rng, params.gains.shape, 1.0))


def _realize(params: ChannelParams, n_t: int, n_r: int, gains: np.ndarray) -> np.ndarray:
    k = params.n_clusters * params.n_rays
    batch = params.batch_shape
    a_r = array_response(n_r, params.aoa.reshape(batch + (k,)), params.spacing)  # (..., K, N_r)
    a_t = array_response(n_t, params.aod.reshape(batch + (k,)), params.spacing)
    g = gains.reshape(batch + (k,))
    scale = np.sqrt(n_t * n_r / k)
    # sum_k g_k a_r,k a_t,k^H
    return scale * np.einsum("...k,...kr,...kt->...rt", g, a_r, np.conj(a_t))


def realize_channel(params: ChannelParams, n_t: int, n_r: int) -> np.ndarray:
    return _realize(params, n_t, n_r, params.gains)


def doppler_factors(params: ChannelParams, doppler_hz: float, delay_s: float) -> np.ndarray:
    return np.exp(2j * np.pi * doppler_hz * delay_s * np.cos(params.aoa))


def realize_delayed_channel(params: ChannelParams, n_t: int, n_r: int, doppler_hz: float, delay_s: float) -> np.ndarray:
    if delay_s < 0:
        raise DomainError(f"delay must be non-negative, got {delay_s}")
    if doppler_hz * delay_s == 0:
        return realize_channel(params, n_t, n_r)
    return _realize(params, n_t, n_r, params.gains * doppler_factors(params, doppler_hz, delay_s))


def delay_for_scheme(tau_single: float, q_scheme: float, q_single: float) -> float:
    """CSI delay proportional to the feedback volume relative to the single-timescale scheme."""
    if q_single <= 0:
        raise DomainError("q_single must be positive")
    return tau_single * q_scheme / q_single


# --- datasets -------------------------------------------------------------


@dataclass
class LinkSample:
    channel: ChannelSample
    pilot_noise: np.ndarray  # (N_r, L), variance sigma^2
    pilot_noise_eq: np.ndarray  # (N_r, L_eq)
    data_noise: np.ndarray  # (N_r,)
    bits: np.ndarray  # (N_s, log2 M) uint8


@dataclass
class DatasetConfig:
    n_t: int
    n_r: int
    n_s: int = 2
    mod_order: int = 4
    pilot_len: int = 8
    pilot_len_eq: int = 2
    n_clusters: int = 3
    n_rays: int = 4
    snr_db: float = 10.0
    doppler_hz: float = 0.0
    delay_s: float = 0.0
    stats: ChannelStatistics = field(default_factory=ChannelStatistics)

    @classmethod
    def from_object(cls, cfg) -> "DatasetConfig":
        if isinstance(cfg, cls):
            return cfg
        names = cls.__dataclass_fields__
        return cls(**{k: getattr(cfg, k) for k in names if hasattr(cfg, k)})


@dataclass
class LinkBatch:
    """Batched counterpart of :class:`LinkSample` (leading axis = batch)."""

    params: ChannelParams
    h: np.ndarray  # (n, N_r, N_t)
    h_delayed: np.ndarray
    pilot_noise: np.ndarray  # (n, N_r, L)
    pilot_noise_eq: np.ndarray  # (n, N_r, L_eq)
    data_noise: np.ndarray  # (n, N_r)
    bits: np.ndarray  # (n, N_s, log2 M) uint8

    def __len__(self) -> int:
        return self.h.shape[0]


class LinkSource:
    """Batched link draws on separate channel / noise / payload streams.

    ``draw(n)`` samples fresh channels; ``draw(params=p)`` keeps the angles
    of ``p`` and redraws only the gains (a new slot of the same superframe).
    """

    def __init__(self, rng: RngStream, config):
        self.cfg = DatasetConfig.from_object(config)
        self.ch_rng, self.nz_rng, self.bit_rng = rng.child(CHANNEL), rng.child(NOISE), rng.child(DATA)
        self.noise_var = 10.0 ** (-self.cfg.snr_db / 10.0)
        self.bits_per_symbol = int(np.log2(self.cfg.mod_order))

    def new_params(self, n: int, stats: ChannelStatistics | None = None) -> ChannelParams:
        return sample_channel_params(self.ch_rng, self.cfg.n_clusters, self.cfg.n_rays, (n,), stats or self.cfg.stats)

    def draw(self, n: int | None = None, params: ChannelParams | None = None) -> LinkBatch:
        cfg = self.cfg
        if params is None:
            params = self.new_params(n)
        else:
            params = redraw_gains(self.ch_rng, params)
        n = params.batch_shape[0]
        h = realize_channel(params, cfg.n_t, cfg.n_r)
        hd = realize_delayed_channel(params, cfg.n_t, cfg.n_r, cfg.doppler_hz, cfg.delay_s)
        s2 = self.noise_var
        pn = cgauss_array(self.nz_rng, (n, cfg.n_r, cfg.pilot_len), s2)
        pne = cgauss_array(self.nz_rng, (n, cfg.n_r, cfg.pilot_len_eq), s2)
        dn = cgauss_array(self.nz_rng, (n, cfg.n_r), s2)
        bits = self.bit_rng.integers(0, 2, (n, cfg.n_s, self.bits_per_symbol)).astype(np.uint8)
        return LinkBatch(params, h, hd, pn, pne, dn, bits)


def generate_dataset(rng: RngStream, config, count: int, batch: int = 256) -> Iterator[LinkSample]:
    """Lazily yield ``count`` independent link samples.

    Samples are drawn in blocks of ``batch`` to keep memory bounded. ``rng``
    supplies the seed; channel, noise and payload draws use separate streams.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    src = LinkSource(rng, config)
    cfg = src.cfg
    done = 0
    while done < count:
        b = src.draw(min(batch, count - done))
        for i in range(len(b)):
            yield LinkSample(
                ChannelSample(b.params[i], b.h[i], b.h_delayed[i], cfg.delay_s, cfg.doppler_hz),
                b.pilot_noise[i], b.pilot_noise_eq[i], b.data_noise[i], b.bits[i],
            )
        done += len(b)


def dump_dataset(path, samples: list[LinkSample], seed: int) -> None:
    if not samples:
        raise ShapeError("empty dataset")
    p0 = samples[0].channel.params
    arrays = {
        "h": np.stack([s.channel.h for s in samples]),
        "h_delayed": np.stack([s.channel.h_delayed for s in samples]),
        "gains": np.stack([s.channel.params.gains for s in samples]),
        "aoa": np.stack([s.channel.params.aoa for s in samples]),
        "aod": np.stack([s.channel.params.aod for s in samples]),
        "pilot_noise": np.stack([s.pilot_noise for s in samples]),
        "pilot_noise_eq": np.stack([s.pilot_noise_eq for s in samples]),
        "data_noise": np.stack([s.data_noise for s in samples]),
        "bits": np.stack([s.bits for s in samples]),
    }
    n_r, n_t = samples[0].channel.h.shape
    meta = {
        "kind": "link-dataset",
        "n_t": n_t,
        "n_r": n_r,
        "n_clusters": p0.n_clusters,
        "n_rays": p0.n_rays,
        "seed": int(seed),
        "spacing": p0.spacing,
        "delay_s": samples[0].channel.delay_s,
        "doppler_hz": samples[0].channel.doppler_hz,
    }
    container.save(path, arrays, meta)


def load_dataset(path) -> tuple[list[LinkSample], dict]:
    a, meta = container.load(path)
    out = []
    for i in range(a["h"].shape[0]):
        params = ChannelParams(a["gains"][i], a["aoa"][i], a["aod"][i], meta["spacing"])
        ch = ChannelSample(params, a["h"][i], a["h_delayed"][i], meta["delay_s"], meta["doppler_hz"])
        out.append(LinkSample(ch, a["pilot_noise"][i], a["pilot_noise_eq"][i], a["data_noise"][i], a["bits"][i]))
    return out, meta
