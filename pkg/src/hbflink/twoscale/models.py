"""Long- and short-term end-to-end models.

Both models share one :class:`ParameterStore`, with names prefixed
``long/``, ``short/`` and ``demod/``. A forward pass is batched over the
leading axis of the channel array and returns a :class:`ForwardResult`
holding the differentiable loss, the numeric precoders and the feedback.

Complex quantities travel as :class:`CTensor` pairs. Vectorization is
column-major everywhere, so ``vec(Y)`` for a pilot matrix is the pilot
columns laid end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DomainError, ShapeError
from ..nngine import autodiff as ad
from ..nngine.autodiff import CTensor, Tensor
from ..nngine.layers import Ctx, constant_modulus, mlp, repair_modulus
from ..nngine.store import ParameterStore
from ..numerics import RngStream
from ..phy import PrecoderSet, modulate
from .analog import SlidingWindow, quantize_phases
from .dims import SystemDims


@dataclass
class NetOptions:
    dropout: float = 0.1
    residual: bool = True
    batchnorm: bool = True


@dataclass
class ForwardResult:
    logits: Tensor  # (b, N_s * log2 M)
    loss: Tensor
    precoders: PrecoderSet
    feedback: np.ndarray  # (b, B) entries in {-1, +1}, or tanh codes
    phi_f_bar: np.ndarray | None = None  # network phases before any state update
    phi_w_bar: np.ndarray | None = None
    h_hat: np.ndarray | None = None  # (b, 2 N_r N_t) recovered channel, real stacking

    @property
    def probs(self) -> np.ndarray:
        z = self.logits.value
        return 0.5 * (1.0 + np.tanh(0.5 * z))


# --- small complex helpers --------------------------------------------------


def _ct(z) -> CTensor:
    return CTensor.const(np.asarray(z, dtype=np.complex128))


def _transpose(a: CTensor) -> CTensor:
    return CTensor(ad.swap_last(a.re), ad.swap_last(a.im))


def _col_normalize(x: CTensor, power: float) -> CTensor:
    """Scale each column to squared norm ``power``."""
    norm = ad.sqrt(ad.sum(x.abs2(), axis=-2, keepdims=True))
    s = np.sqrt(power)
    return CTensor(x.re / norm * s, x.im / norm * s)


def _phase_matrix(phi, n: int, n_rf: int) -> CTensor:
    """``unvec(exp(j phi) / sqrt(n))`` from a phase tensor of shape ``(b, n n_rf)``."""
    phi = ad.as_tensor(phi)
    v = CTensor(ad.cos(phi), ad.sin(phi)).scale(1.0 / np.sqrt(n))
    return ad.cunvec(v, n, n_rf)


def _normalize_digital(f_rf: CTensor, f_bb: CTensor, power: float) -> CTensor:
    prod = f_rf @ f_bb
    nrm = ad.sqrt(ad.sum(ad.sum(prod.abs2(), axis=-1), axis=-1))
    s = ad.reshape(ad.div(np.sqrt(power), nrm), nrm.shape + (1, 1))
    return CTensor(f_bb.re * s, f_bb.im * s)


def _transmit(h, f_rf: CTensor, f_bb: CTensor, w_rf: CTensor, w_bb: CTensor, s, n) -> CTensor:
    """``W_BB^H W_RF^H (H F_RF F_BB s + n)`` for batched constants ``h, s, n``."""
    x = f_rf @ (f_bb @ _ct(s[..., None]))
    z = _ct(h) @ x + _ct(n[..., None])
    r = w_bb.H @ (w_rf.H @ z)
    return r.reshape(r.shape[:-1])


def _rf_mask(n: int, n_rf: int, active: int | None) -> np.ndarray | None:
    if active is None or active >= n_rf:
        return None
    m = np.zeros((n, n_rf))
    m[:, :active] = 1.0
    return m


def _masked(a: CTensor, mask) -> CTensor:
    return a if mask is None else a.scale(mask)


def _value(a: CTensor) -> np.ndarray:
    return a.value


# --- demodulator ------------------------------------------------------------


class Demodulator:
    """Received symbol vector (real stacking, ``2 N_s``) to per-bit logits."""

    def __init__(self, dims: SystemDims, opts: NetOptions, prefix: str = "demod"):
        self.prefix = prefix
        self.dims = dims
        out = dims.n_s * dims.bits_per_symbol
        self.net = mlp(f"{prefix}/net", [2 * dims.n_s, 64, 32, out], "none", batchnorm=opts.batchnorm,
                       dropout=0.0, residual=False)

    def init(self, store: ParameterStore, rng: RngStream) -> None:
        self.net.init(store, rng)

    def __call__(self, store, r: CTensor, ctx: Ctx) -> Tensor:
        return self.net.forward(store, ad.to_real(r), ctx)


def _loss(logits: Tensor, bits: np.ndarray) -> Tensor:
    labels = np.asarray(bits, dtype=np.float64).reshape(bits.shape[0], -1)
    return ad.sigmoid_bce_with_logits(logits, labels)


# --- long-term model ---------------------------------------------------------


class LongTermModel:
    """Pilots with per-pilot analog pairs, B-bit feedback, hybrid precoding.

    ``feedback="tanh"`` replaces the binary output with tanh code neurons
    (first step of the two-step quantizer training); ``code_quantizer`` then
    maps those codes through a scalar quantizer before recovery.
    """

    def __init__(self, dims: SystemDims, opts: NetOptions | None = None, prefix: str = "long",
                 window: int | None = None, feedback: str = "binary", code_width: int | None = None):
        self.dims, self.opts, self.prefix = dims, opts or NetOptions(), prefix
        self.window = dims.window if window is None else window
        self.feedback = feedback
        d = dims
        nh = d.n_r * d.n_t
        self.code_width = code_width or d.bits
        o = self.opts
        kw = dict(batchnorm=o.batchnorm, dropout=o.dropout, residual=o.residual)
        out_kind = "binary" if feedback == "binary" else "tanh"
        self.fb = mlp(f"{prefix}/fb", [2 * d.n_r_rf * d.pilot_len, 256, 128, 2 * nh, 128, self.code_width],
                      out_kind, **kw)
        self.rec = mlp(f"{prefix}/rec", [self.code_width, 256, 128, 2 * nh], "none", **kw)
        self.ap = mlp(f"{prefix}/ap", [2 * self.window * nh, 256, 128, d.n_t * d.n_t_rf], "none", **kw)
        self.ac = mlp(f"{prefix}/ac", [2 * self.window * nh, 256, 128, d.n_r * d.n_r_rf], "none", **kw)
        kd = dict(batchnorm=o.batchnorm, dropout=o.dropout, residual=False)
        self.dp = mlp(f"{prefix}/dp", [2 * d.n_r_rf * d.n_t_rf, 64, 32, 2 * d.n_t_rf * d.n_s], "none", **kd)
        self.dc = mlp(f"{prefix}/dc", [2 * d.n_r_rf * d.n_t_rf, 64, 32, 2 * d.n_r_rf * d.n_s], "none", **kd)
        self.code_quantizer: Callable[[np.ndarray], np.ndarray] | None = None

    # parameter groups
    @property
    def rx_nets(self):
        return [self.fb]

    @property
    def tx_nets(self):
        return [self.rec, self.ap, self.ac, self.dp, self.dc]

    def pilot_names(self) -> list[str]:
        p = self.prefix
        return [f"{p}/pilot.{k}" for k in ("re", "im")] + [f"{p}/{a}.{k}" for a in ("frf", "wrf") for k in ("re", "im")]

    def init(self, store: ParameterStore, rng: RngStream) -> None:
        d, p = self.dims, self.prefix
        store.add(f"{p}/pilot.re", rng.normal((d.n_t_rf, d.pilot_len)))
        store.add(f"{p}/pilot.im", rng.normal((d.n_t_rf, d.pilot_len)))
        for name, n, n_rf in (("frf", d.n_t, d.n_t_rf), ("wrf", d.n_r, d.n_r_rf)):
            phase = rng.uniform(0.0, 2 * np.pi, (d.pilot_len, n, n_rf))
            store.add(f"{p}/{name}.re", np.cos(phase))
            store.add(f"{p}/{name}.im", np.sin(phase))
        for net in self.rx_nets + self.tx_nets:
            net.init(store, rng)

    def repair(self, store: ParameterStore, rng: RngStream) -> None:
        p = self.prefix
        for name in ("frf", "wrf"):
            repair_modulus(store, f"{p}/{name}.re", f"{p}/{name}.im", rng)

    def pilot_tensors(self, store: ParameterStore, active_len: int | None = None,
                      rf_active: tuple[int, int] | None = None):
        """``(X, F_list, W_list)`` with unit-power pilot columns and 1/sqrt(N) analog entries."""
        d, p = self.dims, self.prefix
        x = _col_normalize(CTensor(store.tensor(f"{p}/pilot.re"), store.tensor(f"{p}/pilot.im")), 1.0)
        f = constant_modulus(CTensor(store.tensor(f"{p}/frf.re"), store.tensor(f"{p}/frf.im"))).scale(1 / np.sqrt(d.n_t))
        w = constant_modulus(CTensor(store.tensor(f"{p}/wrf.re"), store.tensor(f"{p}/wrf.im"))).scale(1 / np.sqrt(d.n_r))
        if active_len is not None and active_len < d.pilot_len:
            x = x.scale(zero_pad_mask(d.n_t_rf, d.pilot_len, active_len))
        if rf_active is not None:
            f = _masked(f, _rf_mask(d.n_t, d.n_t_rf, rf_active[0]))
            w = _masked(w, _rf_mask(d.n_r, d.n_r_rf, rf_active[1]))
        return x, f, w

    def received_pilots(self, store, h, noise, active_len=None, rf_active=None) -> CTensor:
        """``y_l = W_l^H (H F_l x_l + n_l)`` stacked as ``vec(Y)``, shape ``(b, N_r^RF L)``."""
        d = self.dims
        x, f, w = self.pilot_tensors(store, active_len, rf_active)
        noise = np.asarray(noise)
        if active_len is not None and active_len < d.pilot_len:
            noise = zero_pad_pilots(noise, active_len)
        xcol = _transpose(x).reshape((d.pilot_len, d.n_t_rf, 1))
        tx = f @ xcol  # (L, N_t, 1)
        z = _ct(np.asarray(h)[:, None]) @ tx + _ct(np.swapaxes(noise, -1, -2)[..., None])
        y = w.H @ z  # (b, L, N_r^RF, 1)
        return y.reshape((y.shape[0], d.pilot_len * d.n_r_rf))

    def forward(self, store: ParameterStore, demod: Demodulator, h, pilot_noise, data_noise, bits, ctx: Ctx, *,
                h_data=None, window: SlidingWindow | None = None,
                phase_fn: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
                q_rf: int = 0, active_len: int | None = None, rf_active: tuple[int, int] | None = None,
                p_total: float = 1.0) -> ForwardResult:
        """One long-term slot.

        ``h`` drives the pilots; ``h_data`` (default ``h``) carries the data.
        ``window`` supplies earlier recovered channels (detached) and receives
        the current one. ``phase_fn`` maps the network phases to the phases
        actually applied (moving-average state); it cuts the gradient, so it
        is for inference. ``q_rf`` quantizes the applied phases.
        """
        d = self.dims
        h = np.asarray(h)
        h_data = h if h_data is None else np.asarray(h_data)
        y = self.received_pilots(store, h, pilot_noise, active_len, rf_active)
        code = self.fb.forward(store, ad.to_real(y), ctx)
        if self.code_quantizer is not None:
            code = Tensor(self.code_quantizer(code.value))
        rec = self.rec.forward(store, code, ctx)  # (b, 2 N_r N_t)
        feats = [rec]
        if self.window > 1:
            past = window.history(extra=1) if window is not None else []
            if past:
                feats = [Tensor(a) for a in past] + feats
            else:
                feats = [rec] * self.window
        if window is not None:
            window.push(rec.value)
        hw = ad.concat(feats, axis=-1) if len(feats) > 1 else rec
        phi_f = self.ap.forward(store, hw, ctx)
        phi_w = self.ac.forward(store, hw, ctx)
        phi_f_bar, phi_w_bar = phi_f.value, phi_w.value
        if phase_fn is not None:
            pf, pw = phase_fn(phi_f_bar, phi_w_bar)
            phi_f, phi_w = Tensor(pf), Tensor(pw)
        if q_rf:
            phi_f, phi_w = Tensor(quantize_phases(phi_f.value, q_rf)), Tensor(quantize_phases(phi_w.value, q_rf))
        mf = _rf_mask(d.n_t, d.n_t_rf, rf_active[0] if rf_active else None)
        mw = _rf_mask(d.n_r, d.n_r_rf, rf_active[1] if rf_active else None)
        f_rf = _masked(_phase_matrix(phi_f, d.n_t, d.n_t_rf), mf)
        w_rf = _masked(_phase_matrix(phi_w, d.n_r, d.n_r_rf), mw)
        h_hat = ad.cunvec(ad.from_real(rec), d.n_r, d.n_t)
        h_eq = w_rf.H @ h_hat @ f_rf
        eq_feat = ad.to_real(ad.cvec(h_eq))
        f_bb, w_bb = self._digital(store, eq_feat, ctx, rf_active)
        f_bb = _normalize_digital(f_rf, f_bb, p_total)
        s = modulate(bits, d.mod_order)
        r = _transmit(h_data, f_rf, f_bb, w_rf, w_bb, s, data_noise)
        logits = demod(store, r, ctx)
        pre = PrecoderSet(_value(f_rf), _value(f_bb), _value(w_rf), _value(w_bb))
        return ForwardResult(logits, _loss(logits, bits), pre, code.value, phi_f_bar, phi_w_bar, rec.value)

    def _digital(self, store, eq_feat, ctx, rf_active):
        d = self.dims
        f_bb = ad.cunvec(ad.from_real(self.dp.forward(store, eq_feat, ctx)), d.n_t_rf, d.n_s)
        w_bb = ad.cunvec(ad.from_real(self.dc.forward(store, eq_feat, ctx)), d.n_r_rf, d.n_s)
        if rf_active is not None:
            f_bb = _masked(f_bb, _row_mask(d.n_t_rf, d.n_s, rf_active[0]))
            w_bb = _masked(w_bb, _row_mask(d.n_r_rf, d.n_s, rf_active[1]))
        return f_bb, w_bb


def _row_mask(rows: int, cols: int, active: int) -> np.ndarray | None:
    if active >= rows:
        return None
    m = np.zeros((rows, cols))
    m[:active] = 1.0
    return m


# --- short-term model --------------------------------------------------------


class ShortTermModel:
    """Equivalent-channel pilots, B_eq-bit feedback, digital precoding."""

    def __init__(self, dims: SystemDims, opts: NetOptions | None = None, prefix: str = "short"):
        self.dims, self.opts, self.prefix = dims, opts or NetOptions(), prefix
        d, o = dims, self.opts
        neq = 2 * d.n_r_rf * d.n_t_rf
        kw = dict(batchnorm=o.batchnorm, dropout=o.dropout, residual=False)
        self.fb = mlp(f"{prefix}/fb", [2 * d.n_r_rf * d.pilot_len_eq, 128, 64, d.bits_eq], "binary", **kw)
        self.rec = mlp(f"{prefix}/rec", [d.bits_eq, 128, 64, neq], "none", **kw)
        self.dp = mlp(f"{prefix}/dp", [neq, 64, 32, 2 * d.n_t_rf * d.n_s], "none", **kw)
        self.dc = mlp(f"{prefix}/dc", [neq, 64, 32, 2 * d.n_r_rf * d.n_s], "none", **kw)

    @property
    def rx_nets(self):
        return [self.fb]

    @property
    def tx_nets(self):
        return [self.rec, self.dp, self.dc]

    def pilot_names(self) -> list[str]:
        return [f"{self.prefix}/pilot.re", f"{self.prefix}/pilot.im"]

    def init(self, store: ParameterStore, rng: RngStream) -> None:
        d = self.dims
        store.add(f"{self.prefix}/pilot.re", rng.normal((d.n_t_rf, d.pilot_len_eq)))
        store.add(f"{self.prefix}/pilot.im", rng.normal((d.n_t_rf, d.pilot_len_eq)))
        for net in self.rx_nets + self.tx_nets:
            net.init(store, rng)

    def pilot_tensor(self, store, active_len: int | None = None) -> CTensor:
        d = self.dims
        x = _col_normalize(CTensor(store.tensor(f"{self.prefix}/pilot.re"), store.tensor(f"{self.prefix}/pilot.im")), 1.0)
        if active_len is not None and active_len < d.pilot_len_eq:
            x = x.scale(zero_pad_mask(d.n_t_rf, d.pilot_len_eq, active_len))
        return x

    def forward(self, store: ParameterStore, demod: Demodulator, f_rf, w_rf, h, pilot_noise_eq, data_noise, bits,
                ctx: Ctx, *, h_data=None, active_len: int | None = None, rf_active: tuple[int, int] | None = None,
                p_total: float = 1.0) -> ForwardResult:
        """One short-term slot with the analog stages ``f_rf, w_rf`` held fixed.

        ``pilot_noise_eq`` is antenna-domain noise ``(b, N_r, L_eq)``; it is
        combined by ``W_RF^H`` here.
        """
        d = self.dims
        f_rf, w_rf, h = np.asarray(f_rf), np.asarray(w_rf), np.asarray(h)
        h_data = h if h_data is None else np.asarray(h_data)
        w_h = np.conj(np.swapaxes(w_rf, -1, -2))
        h_eq = w_h @ h @ f_rf
        n_eq = w_h @ np.asarray(pilot_noise_eq)
        if active_len is not None and active_len < d.pilot_len_eq:
            n_eq = zero_pad_pilots(n_eq, active_len)
        x = self.pilot_tensor(store, active_len)
        y = _ct(h_eq) @ x + _ct(n_eq)
        code = self.fb.forward(store, ad.to_real(ad.cvec(y)), ctx)
        rec = self.rec.forward(store, code, ctx)
        f_bb = ad.cunvec(ad.from_real(self.dp.forward(store, rec, ctx)), d.n_t_rf, d.n_s)
        w_bb = ad.cunvec(ad.from_real(self.dc.forward(store, rec, ctx)), d.n_r_rf, d.n_s)
        if rf_active is not None:
            f_bb = _masked(f_bb, _row_mask(d.n_t_rf, d.n_s, rf_active[0]))
            w_bb = _masked(w_bb, _row_mask(d.n_r_rf, d.n_s, rf_active[1]))
        frf_t, wrf_t = _ct(f_rf), _ct(w_rf)
        f_bb = _normalize_digital(frf_t, f_bb, p_total)
        s = modulate(bits, d.mod_order)
        r = _transmit(h_data, frf_t, f_bb, wrf_t, w_bb, s, data_noise)
        logits = demod(store, r, ctx)
        pre = PrecoderSet(f_rf, _value(f_bb), w_rf, _value(w_bb))
        return ForwardResult(logits, _loss(logits, bits), pre, code.value)


# --- zero padding -----------------------------------------------------------


def zero_pad_mask(rows: int, cols: int, active: int) -> np.ndarray:
    m = np.zeros((rows, cols))
    m[:, :active] = 1.0
    return m


def zero_pad_pilots(a, active_len: int) -> np.ndarray:
    """Zero every pilot column from ``active_len`` on (last axis)."""
    a = np.array(a, copy=True)
    if active_len > a.shape[-1]:
        raise DomainError(f"active pilot length {active_len} exceeds {a.shape[-1]}")
    if active_len < 0:
        raise ShapeError("active pilot length must be >= 0")
    a[..., active_len:] = 0
    return a


# --- bundle -----------------------------------------------------------------


@dataclass
class TwoScaleSystem:
    """Both models, the shared demodulator and their parameter store."""

    dims: SystemDims
    long: LongTermModel
    short: ShortTermModel
    demod: Demodulator
    store: ParameterStore = field(default_factory=ParameterStore)

    @classmethod
    def build(cls, dims: SystemDims, rng: RngStream, opts: NetOptions | None = None, window: int | None = None,
              feedback: str = "binary", code_width: int | None = None) -> "TwoScaleSystem":
        opts = opts or NetOptions()
        sys_ = cls(dims, LongTermModel(dims, opts, window=window, feedback=feedback, code_width=code_width),
                   ShortTermModel(dims, opts), Demodulator(dims, opts))
        sys_.long.init(sys_.store, rng)
        sys_.short.init(sys_.store, rng)
        sys_.demod.init(sys_.store, rng)
        return sys_

    def names(self, *groups: str) -> list[str]:
        """Parameter names of the given groups (``long``, ``short``, ``demod``)."""
        return [n for g in groups for n in self.store.names(f"{g}/")]
