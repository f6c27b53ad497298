"""Physical-layer signal chain: QAM mapping, hybrid transmission, metrics.

Conventions used throughout the package:

* Analog (phase-shifter) matrices have entries of magnitude ``1/sqrt(N)``
  where ``N`` is the number of antennas on that side.
* ``P = P_T = 1`` and ``SNR = P_T / sigma_n^2``.
* Square QAM is Gray-labelled per axis. For ``k = log2(M)`` bits per
  symbol, the first ``k/2`` bits select the in-phase level and the last
  ``k/2`` the quadrature level. Along one axis with ``m = sqrt(M)`` levels,
  the level with index ``i`` (Gray label ``i ^ (i >> 1)``) has amplitude
  ``(m - 1 - 2 i)``, so bit 0 on the leading position means a positive
  amplitude. The constellation is scaled to unit average energy. For QPSK
  this gives ``(0, 0) -> (1 + 1j)/sqrt(2)``.

Functions accept leading batch axes unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erfc

from .errors import ConfigError, ConstraintError, DegenerateError, ShapeError

SUPPORTED_ORDERS = (4, 16, 64)
PROB_EPS = 1e-12
MODULUS_TOL = 1e-9
POWER_TOL = 1e-9


# --- modulation -----------------------------------------------------------


def _check_order(m: int) -> int:
    if m not in SUPPORTED_ORDERS:
        raise ConfigError(f"unsupported modulation order {m}; expected one of {SUPPORTED_ORDERS}")
    return int(np.log2(m))


@lru_cache(maxsize=None)
def _pam_table(m_axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Amplitudes indexed by the integer value of the Gray label bits."""
    nb = int(np.log2(m_axis))
    amp_by_label = np.zeros(m_axis)
    for i in range(m_axis):
        amp_by_label[i ^ (i >> 1)] = m_axis - 1 - 2 * i
    labels = ((np.arange(m_axis)[:, None] >> np.arange(nb - 1, -1, -1)) & 1).astype(np.uint8)
    return amp_by_label, labels


@lru_cache(maxsize=None)
def constellation(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(points, bit_labels)`` with ``bit_labels[i]`` the bits of ``points[i]``."""
    k = _check_order(m)
    h = k // 2
    m_axis = 2**h
    amp, _ = _pam_table(m_axis)
    scale = np.sqrt(2.0 * (m - 1) / 3.0)
    idx = np.arange(m)
    bits = ((idx[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)
    i_val = idx >> h
    q_val = idx & (m_axis - 1)
    points = (amp[i_val] + 1j * amp[q_val]) / scale
    return points, bits


def _bits_to_int(bits: np.ndarray) -> np.ndarray:
    k = bits.shape[-1]
    weights = 1 << np.arange(k - 1, -1, -1)
    return (bits.astype(np.int64) * weights).sum(axis=-1)


def modulate(bits, m: int = 4) -> np.ndarray:
    """Map ``(..., N_s, log2 M)`` bits to ``(..., N_s)`` unit-energy symbols."""
    k = _check_order(m)
    bits = np.asarray(bits)
    if bits.shape[-1] != k:
        raise ShapeError(f"expected {k} bits per symbol, got {bits.shape[-1]}")
    if np.any((bits != 0) & (bits != 1)):
        raise ShapeError("payload bits must be 0 or 1")
    points, _ = constellation(m)
    return points[_bits_to_int(bits)]


def hard_demodulate(r, m: int = 4) -> np.ndarray:
    """Nearest-point detection, returns ``(..., N_s, log2 M)`` bits."""
    points, labels = constellation(m)
    r = np.asarray(r)
    d = np.abs(r[..., None] - points) ** 2
    return labels[np.argmin(d, axis=-1)]


def soft_demodulate(r, m: int = 4, noise_var=1.0) -> np.ndarray:
    """Per-stream posterior probability that each bit equals 1.

    ``noise_var`` is the complex noise variance on each stream after
    equalization; it broadcasts against ``r``.
    """
    points, labels = constellation(m)
    r = np.asarray(r)
    nv = np.maximum(np.asarray(noise_var, dtype=float), 1e-300)
    metric = -np.abs(r[..., None] - points) ** 2 / nv[..., None]
    metric = metric - metric.max(axis=-1, keepdims=True)
    w = np.exp(metric)
    w = w / w.sum(axis=-1, keepdims=True)
    return np.clip(w @ labels.astype(float), 0.0, 1.0)


def qpsk_ber_awgn(snr_db: float) -> float:
    """Closed-form Gray QPSK bit error rate for ``r = s + n`` with ``E|s|^2 = 1``."""
    snr = 10.0 ** (snr_db / 10.0)
    return float(0.5 * erfc(np.sqrt(snr) / np.sqrt(2.0)))


# --- precoders and transmission -------------------------------------------


@dataclass
class PrecoderSet:
    f_rf: np.ndarray  # (..., N_t, N_t^RF)
    f_bb: np.ndarray  # (..., N_t^RF, N_s)
    w_rf: np.ndarray  # (..., N_r, N_r^RF)
    w_bb: np.ndarray  # (..., N_r^RF, N_s)

    def check(self, p_total: float = 1.0, modulus_tol: float = MODULUS_TOL, power_tol: float = POWER_TOL,
              active: tuple[int, int] | None = None) -> None:
        """Raise :class:`ConstraintError` unless modulus and power constraints hold.

        ``active = (n_t_rf, n_r_rf)`` restricts the modulus check to the leading
        columns (zero-padded reduced-RF operation).
        """
        ft, wr = self.f_rf, self.w_rf
        if active is not None:
            ft, wr = ft[..., : active[0]], wr[..., : active[1]]
        n_t, n_r = self.f_rf.shape[-2], self.w_rf.shape[-2]
        err_f = np.max(np.abs(np.abs(ft) - 1 / np.sqrt(n_t)))
        err_w = np.max(np.abs(np.abs(wr) - 1 / np.sqrt(n_r)))
        if err_f > modulus_tol or err_w > modulus_tol:
            raise ConstraintError(f"analog modulus violated: F {err_f:.3g}, W {err_w:.3g}")
        pw = transmit_power(self.f_rf, self.f_bb)
        err_p = np.max(np.abs(pw - p_total)) / p_total
        if err_p > power_tol:
            raise ConstraintError(f"transmit power violated: relative error {err_p:.3g}")

    def __getitem__(self, idx) -> "PrecoderSet":
        return PrecoderSet(self.f_rf[idx], self.f_bb[idx], self.w_rf[idx], self.w_bb[idx])


def _h(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def transmit_power(f_rf, f_bb) -> np.ndarray:
    prod = np.asarray(f_rf) @ np.asarray(f_bb)
    return np.sum(prod.real**2 + prod.imag**2, axis=(-2, -1))


def _check_mul(a, b, what):
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"{what}: cannot multiply {a.shape} by {b.shape}")


def transmit_receive(h, p: PrecoderSet, s, n) -> np.ndarray:
    """``r = W_BB^H W_RF^H (H F_RF F_BB s + n)``."""
    h = np.asarray(h)
    s = np.asarray(s)
    n = np.asarray(n)
    _check_mul(h, p.f_rf, "H F_RF")
    _check_mul(p.f_rf, p.f_bb, "F_RF F_BB")
    if p.f_bb.shape[-1] != s.shape[-1]:
        raise ShapeError(f"F_BB has {p.f_bb.shape[-1]} streams but s has {s.shape[-1]}")
    if p.w_rf.shape[-2] != h.shape[-2] or n.shape[-1] != h.shape[-2]:
        raise ShapeError("combiner / noise dimension does not match the receive antennas")
    if p.w_bb.shape[-2] != p.w_rf.shape[-1]:
        raise ShapeError("W_BB rows must equal the number of receive RF chains")
    x = (p.f_rf @ (p.f_bb @ s[..., None]))
    z = h @ x + n[..., None]
    return (_h(p.w_bb) @ (_h(p.w_rf) @ z))[..., 0]


def equivalent_channel(h, f_rf, w_rf) -> np.ndarray:
    h, f_rf, w_rf = np.asarray(h), np.asarray(f_rf), np.asarray(w_rf)
    _check_mul(h, f_rf, "H F_RF")
    if w_rf.shape[-2] != h.shape[-2]:
        raise ShapeError(f"W_RF has {w_rf.shape[-2]} rows but H has {h.shape[-2]}")
    return _h(w_rf) @ h @ f_rf


def normalize_digital(f_rf, f_bb_raw, p_total: float = 1.0) -> np.ndarray:
    """Scale ``F_BB`` so that ``||F_RF F_BB||_F^2 = P_T``."""
    f_rf, f_bb_raw = np.asarray(f_rf), np.asarray(f_bb_raw)
    _check_mul(f_rf, f_bb_raw, "F_RF F_BB")
    nrm = np.sqrt(transmit_power(f_rf, f_bb_raw))
    if np.any(nrm <= 0) or not np.all(np.isfinite(nrm)):
        raise DegenerateError("F_RF F_BB has zero norm; cannot normalize")
    return f_bb_raw * (np.sqrt(p_total) / nrm)[..., None, None]


def _check_modulus(m: np.ndarray, what: str) -> None:
    # zero entries are allowed (masked RF chains, identity-shaped selection)
    mag = np.abs(m)
    ref = mag.max(axis=(-2, -1), keepdims=True)
    tol = MODULUS_TOL * np.maximum(ref, 1.0)
    if np.any((ref - mag > tol) & (mag > tol)):
        raise ConstraintError(f"{what} is not constant-modulus")


def _check_pilot_power(x: np.ndarray, p: float) -> None:
    col_pow = np.sum(np.abs(x) ** 2, axis=-2)
    if np.any(col_pow > p * (1 + 1e-9)):
        raise ConstraintError(f"pilot column power {col_pow.max():.6g} exceeds {p}")


def pilot_rx_long(h, x_pilot, f_list, w_list, noise, p: float = 1.0) -> np.ndarray:
    """Received pilots with a distinct RF pair per pilot column.

    ``x_pilot`` is ``(N_t^RF, L)``; ``f_list`` is ``(L, N_t, N_t^RF)``;
    ``w_list`` is ``(L, N_r, N_r^RF)``; ``noise`` is the antenna-domain AWGN
    ``(..., N_r, L)``. Returns ``(..., N_r^RF, L)``.
    """
    h, x_pilot, f_list, w_list, noise = map(np.asarray, (h, x_pilot, f_list, w_list, noise))
    L = x_pilot.shape[-1]
    if f_list.shape[-3] != L or w_list.shape[-3] != L or noise.shape[-1] != L:
        raise ShapeError("pilot length mismatch between X, RF lists and noise")
    _check_modulus(f_list, "pilot analog precoder")
    _check_modulus(w_list, "pilot analog combiner")
    _check_pilot_power(x_pilot, p)
    xl = np.swapaxes(x_pilot, -1, -2)[..., None]  # (L, N_t^RF, 1)
    tx = f_list @ xl  # (L, N_t, 1)
    hz = h[..., None, :, :] @ tx  # (..., L, N_r, 1)
    nz = np.swapaxes(noise, -1, -2)[..., None]  # (..., L, N_r, 1)
    y = _h(w_list) @ (hz + nz)  # (..., L, N_r^RF, 1)
    return np.swapaxes(y[..., 0], -1, -2)


def pilot_rx_short(h_eq, x_eq, noise_eq, p: float = 1.0) -> np.ndarray:
    """``Y_eq = H_eq X_eq + N_eq`` with ``N_eq`` already in the combined domain."""
    h_eq, x_eq, noise_eq = map(np.asarray, (h_eq, x_eq, noise_eq))
    _check_mul(h_eq, x_eq, "H_eq X_eq")
    _check_pilot_power(x_eq, p)
    return h_eq @ x_eq + noise_eq


# --- metrics --------------------------------------------------------------


def bce_loss(labels, probs, eps: float = PROB_EPS) -> float:
    """Batch mean of the per-sample summed binary cross-entropy.

    The first axis is the batch; all remaining axes are summed.
    """
    labels = np.asarray(labels, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if labels.shape != probs.shape:
        raise ShapeError(f"labels {labels.shape} and probs {probs.shape} differ")
    p = np.clip(probs, eps, 1 - eps)
    per = -(labels * np.log(p) + (1 - labels) * np.log1p(-p))
    if per.ndim == 0:
        return float(per)
    return float(per.reshape(per.shape[0], -1).sum(axis=1).mean())


def hard_bits(probs) -> np.ndarray:
    """Threshold at 0.5; ties go to 1."""
    return (np.asarray(probs) >= 0.5).astype(np.uint8)


def bit_errors(labels, probs) -> int:
    return int(np.count_nonzero(hard_bits(probs) != np.asarray(labels)))


def ber(labels, probs) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return bit_errors(labels, probs) / labels.size
