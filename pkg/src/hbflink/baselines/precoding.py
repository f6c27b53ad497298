"""SVD / phase-projection hybrid precoding ("svd-hybrid (stand-in)").

A compact classical comparison point: start from the fully-digital SVD
precoder, take the entry-wise phase of it as the analog stage, fit the
digital stage by least squares, and alternate the two for a fixed number of
rounds. A round is kept only if it lowers the fitting residual, so the
residual trace is non-increasing. The combiner is built the same way from
the left singular vectors, followed by an unbiased MMSE digital stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateError
from ..phy import PrecoderSet, normalize_digital

LABEL = "svd-hybrid (stand-in)"


def _h(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _phase_project(a: np.ndarray, n: int) -> np.ndarray:
    return np.exp(1j * np.angle(a)) / np.sqrt(n)


def _resid(f_rf, f_bb, target):
    d = f_rf @ f_bb - target
    return np.sqrt(np.sum(np.abs(d) ** 2, axis=(-2, -1)))


def alt_min_hybrid(target: np.ndarray, basis: np.ndarray, n_rf: int, iters: int = 10):
    """Approximate ``target`` (N x N_s) by ``A D`` with ``A`` constant-modulus N x n_rf.

    ``basis`` (N x >= n_rf) seeds the analog stage. Returns ``(A, D, trace)``
    where ``trace`` holds the residual after initialization and after every
    round (length ``iters + 1``), batched over leading axes.
    """
    n = target.shape[-2]
    a = _phase_project(basis[..., :n_rf], n)
    d = np.linalg.pinv(a) @ target
    r = _resid(a, d, target)
    trace = [r]
    for _ in range(iters):
        a_new = _phase_project(target @ _h(d), n)
        d_new = np.linalg.pinv(a_new) @ target
        r_new = _resid(a_new, d_new, target)
        keep = r_new <= r
        a = np.where(keep[..., None, None], a_new, a)
        d = np.where(keep[..., None, None], d_new, d)
        r = np.where(keep, r_new, r)
        trace.append(r)
    return a, d, np.stack(trace, axis=-1)


@dataclass
class HybridSolution:
    precoders: PrecoderSet
    fit_trace: np.ndarray  # (..., iters + 1) transmit-side residual
    post_noise_var: np.ndarray  # (..., N_s) noise + interference per stream after combining


def mmse_combiner(h_eff: np.ndarray, w_rf: np.ndarray, noise_var: float) -> np.ndarray:
    """Unbiased MMSE digital combiner for ``y = W_RF^H (H_eff s + n)``.

    Columns are scaled so that ``diag(W_BB^H W_RF^H H_eff) = 1``.
    """
    g = _h(w_rf) @ h_eff  # (..., N_r^RF, N_s)
    if noise_var > 0:
        r = g @ _h(g) + noise_var * (_h(w_rf) @ w_rf)
        w_bb = np.linalg.solve(r, g)
    else:
        w_bb = _h(np.linalg.pinv(g))
    gain = np.einsum("...ik,...ik->...k", np.conj(w_bb), g)
    gain = np.where(np.abs(gain) > 1e-300, gain, 1.0)
    return w_bb / np.conj(gain)[..., None, :]


def post_combining_noise(h_eff, p: PrecoderSet, noise_var: float) -> np.ndarray:
    """Interference plus noise power per stream after the full combiner."""
    w = p.w_rf @ p.w_bb
    g = _h(w) @ h_eff
    diag = np.einsum("...kk->...k", g)
    interf = np.sum(np.abs(g) ** 2, axis=-1) - np.abs(diag) ** 2
    return interf + noise_var * np.sum(np.abs(w) ** 2, axis=-2)


def svd_hybrid_precode(h_est, n_t_rf: int, n_r_rf: int, n_s: int, p_total: float = 1.0,
                       noise_var: float = 0.0, iters: int = 10) -> HybridSolution:
    """Hybrid precoder and combiner designed from a channel estimate (batched)."""
    h_est = np.asarray(h_est, dtype=np.complex128)
    norms = np.sqrt(np.sum(np.abs(h_est) ** 2, axis=(-2, -1)))
    if np.any(norms == 0):
        raise DegenerateError("zero channel: no precoder direction exists")
    u, _, vh = np.linalg.svd(h_est)
    v = _h(vh)
    f_rf, f_bb, trace = alt_min_hybrid(v[..., :n_s], v, n_t_rf, iters)
    f_bb = normalize_digital(f_rf, f_bb, p_total)
    w_rf, _, _ = alt_min_hybrid(u[..., :n_s], u, n_r_rf, iters)
    h_eff = h_est @ f_rf @ f_bb
    w_bb = mmse_combiner(h_eff, w_rf, noise_var)
    p = PrecoderSet(f_rf, f_bb, w_rf, w_bb)
    return HybridSolution(p, trace, post_combining_noise(h_eff, p, noise_var))
