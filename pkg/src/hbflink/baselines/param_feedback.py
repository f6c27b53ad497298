"""Per-ray parameter feedback: quantize gains and angles, rebuild the channel."""

from __future__ import annotations

import logging

import numpy as np

from ..channel import ChannelParams, realize_channel
from ..errors import DomainError
from .lloyd_max import gaussian_codebook, quantize, uniform_codebook

log = logging.getLogger(__name__)


def bits_per_parameter(total_bits: int, n_clusters: int, n_rays: int) -> int:
    n_par = 4 * n_clusters * n_rays
    q = total_bits // n_par
    if q < 1:
        raise DomainError(f"{total_bits} bits cannot give one bit to each of {n_par} parameters")
    if total_bits % n_par:
        log.info("%d of %d feedback bits unused", total_bits % n_par, total_bits)
    return q


def quantize_params(params: ChannelParams, q_bits: int) -> ChannelParams:
    """Re/Im gains on the N(0, 1/2) codebook, angles on the Uniform(-pi/2, pi/2) codebook."""
    g_cb = gaussian_codebook(q_bits, np.sqrt(0.5))
    a_cb = uniform_codebook(q_bits, -np.pi / 2, np.pi / 2)
    g = params.gains
    gq = quantize(g_cb, g.real)[1] + 1j * quantize(g_cb, g.imag)[1]
    return ChannelParams(gq, quantize(a_cb, params.aoa)[1], quantize(a_cb, params.aod)[1], params.spacing)


def parameter_feedback_reconstruct(params: ChannelParams, total_bits: int, n_t: int, n_r: int) -> np.ndarray:
    q = bits_per_parameter(total_bits, params.n_clusters, params.n_rays)
    return realize_channel(quantize_params(params, q), n_t, n_r)
