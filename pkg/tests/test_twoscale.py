import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_tiny, tiny_data
from hbflink.baselines.overhead import signaling_overhead
from hbflink.channel import ChannelStatistics, LinkSource
from hbflink.errors import ConfigError, DomainError, EmptyResultError, NumericalError
from hbflink.nngine.checkpoint import stores_equal
from hbflink.nngine.layers import Ctx
from hbflink.numerics import INIT, RngStream
from hbflink.phy import PrecoderSet, ber, qpsk_ber_awgn
from hbflink.twoscale import (DelaySettings, LongTermPhaseState, NetOptions, SlidingWindow, SystemDims, TrainSchedule, drifted,
                              evaluate, gamma, last_layer_policy, phases_to_analog, quantize_phases,
                              train_single_timescale, train_two_timescale, transfer_finetune,
                              update_long_term_phases, zero_pad_pilots, zero_pad_rf)
from hbflink.twoscale.adapters import TwoStepResult, fit_code_codebooks
from hbflink.twoscale.models import TwoScaleSystem
from hbflink.twoscale.analog import analog_to_phases
from hbflink.twoscale.evaluation import scheme_delay, scheme_overhead
from hbflink.twoscale.persist import load_system, save_system


def _batch(system, n=64, seed=3, snr=10.0):
    return LinkSource(RngStream(seed), tiny_data(system.dims, snr)).draw(n)


# --- dims --------------------------------------------------------------------


def test_dims_validation():
    with pytest.raises(ConfigError):
        SystemDims(8, 4, 2, 5, 2)
    with pytest.raises(ConfigError):
        SystemDims.tiny(bits_eq=24)
    assert SystemDims.tiny().pilot_len_eq == 2


# --- analog state --------------------------------------------------------------


def test_phases_to_analog_cases():
    assert np.allclose(phases_to_analog(np.zeros(8), 4, 2), 0.5)
    phi = np.zeros(8)
    phi[3] = np.pi
    a = phases_to_analog(phi, 4, 2)
    assert a[3, 0] == pytest.approx(-0.5)
    phi = RngStream(1).uniform(0, 2 * np.pi, 12)
    back = analog_to_phases(phases_to_analog(phi, 4, 3))
    assert np.allclose(np.mod(back - phi + np.pi, 2 * np.pi) - np.pi, 0, atol=1e-9)


def test_update_phase_cases():
    st0 = LongTermPhaseState(np.zeros(3), np.zeros(2))
    out = update_long_term_phases(st0, np.full(3, 2.0), np.ones(2))  # t = 1 -> gamma 1
    assert np.array_equal(out.phi_f, np.full(3, 2.0)) and out.t == 2
    half = update_long_term_phases(st0, np.full(3, np.pi), np.zeros(2), step=0.5)
    assert np.allclose(half.phi_f, np.pi / 2)
    with pytest.raises(ValueError):
        update_long_term_phases(st0, np.full(3, np.nan), np.zeros(2))


def test_gamma_series():
    t = np.arange(1, 10**6 + 1, dtype=float)
    g = t ** -0.8
    assert gamma(1) == 1.0 and gamma(32) == pytest.approx(32 ** -0.8)
    # sum gamma grows like 5 t^0.2 without bound; sum gamma^2 is bounded by zeta(1.6) < 2.3
    assert g.sum() > 5 * (10**6) ** 0.2 - 5 and g[: 10**5].sum() < g.sum() - 5
    tail_bound = (1e5 - 1) ** -0.6 / 0.6  # integral of t^-1.6 beyond 10^5
    assert (g**2).sum() < 2.3 and (g**2)[10**5:].sum() < tail_bound


def test_quantize_phase_cases():
    assert quantize_phases(0.4 * np.pi, 1) == 0.0
    grid = 2 * np.pi * np.arange(8) / 8
    assert np.allclose(quantize_phases(grid, 3), grid)
    assert np.array_equal(quantize_phases(grid + 0.1, 0), grid + 0.1)
    x = RngStream(2).uniform(-10, 10, 500)
    assert len(np.unique(quantize_phases(x, 2))) <= 4


def test_sliding_window_padding():
    w = SlidingWindow(3)
    w.push(np.array([1.0]))
    assert [a[0] for a in w.stacked()] == [1.0, 1.0, 1.0]
    w.push(np.array([2.0]))
    assert [a[0] for a in w.history(extra=1)] == [1.0, 2.0]
    for v in (3.0, 4.0):
        w.push(np.array([v]))
    assert [a[0] for a in w.stacked()] == [2.0, 3.0, 4.0]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), t=st.integers(1, 10**5))
def test_update_contraction(seed, t):
    rng = RngStream(seed)
    s = LongTermPhaseState(rng.normal(5), rng.normal(3), t=t)
    bf, bw = rng.normal(5), rng.normal(3)
    out = update_long_term_phases(s, bf, bw)
    g = gamma(t)
    assert np.all(np.abs(out.phi_f - bf) <= (1 - g) * np.abs(s.phi_f - bf) + 1e-12)
    assert np.all(np.abs(out.phi_w - bw) <= (1 - g) * np.abs(s.phi_w - bw) + 1e-12)


@settings(max_examples=40, deadline=None)
@given(phi=st.floats(-20, 20), q=st.integers(1, 6))
def test_quantize_nearest(phi, q):
    out = float(quantize_phases(phi, q))
    grid = 2 * np.pi * np.arange(2**q) / 2**q
    circ = np.abs(np.angle(np.exp(1j * (grid - phi))))
    assert np.abs(np.angle(np.exp(1j * (out - phi)))) <= circ.min() + 1e-9


# --- forward paths ---------------------------------------------------------------


def test_long_forward_untrained_invariants():
    system = build_tiny(window=3)
    b = _batch(system)
    w = SlidingWindow(3)
    r = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, Ctx(), window=w)
    d = system.dims
    assert r.precoders.f_rf.shape == (64, d.n_t, d.n_t_rf) and r.precoders.w_bb.shape == (64, d.n_r_rf, d.n_s)
    assert r.probs.shape == (64, d.n_s * 2) and r.feedback.shape == (64, d.bits)
    r.precoders.check()
    assert set(np.unique(r.feedback)) <= {-1.0, 1.0}
    assert len(w) == 1
    r2 = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, Ctx(),
                             window=SlidingWindow(3))
    assert np.array_equal(r.probs, r2.probs) and np.array_equal(r.precoders.f_bb, r2.precoders.f_bb)


def test_long_forward_b64_feedback():
    from hbflink.numerics import INIT
    from hbflink.twoscale import NetOptions, TwoScaleSystem
    system = TwoScaleSystem.build(SystemDims.tiny(bits=64), RngStream(0, INIT), NetOptions(dropout=0.0))
    b = _batch(system, 16)
    r = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, Ctx())
    assert r.feedback.shape == (16, 64) and set(np.unique(r.feedback)) <= {-1.0, 1.0}


def test_short_forward_reuses_analog():
    system = build_tiny()
    b = _batch(system)
    pre = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, Ctx()).precoders
    r = system.short.forward(system.store, system.demod, pre.f_rf, pre.w_rf, b.h, b.pilot_noise_eq, b.data_noise,
                             b.bits, Ctx())
    assert r.precoders.f_rf is pre.f_rf or np.array_equal(r.precoders.f_rf, pre.f_rf)
    assert r.precoders.w_rf.tobytes() == pre.w_rf.tobytes()
    assert r.feedback.shape == (64, system.dims.bits_eq) and set(np.unique(r.feedback)) <= {-1.0, 1.0}
    r.precoders.check()


def test_short_forward_zero_channel_carries_no_information():
    system = build_tiny()
    b = _batch(system, 256)
    pre = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, Ctx()).precoders
    zero = np.zeros_like(b.h)
    r1 = system.short.forward(system.store, system.demod, pre.f_rf, pre.w_rf, zero, b.pilot_noise_eq, b.data_noise,
                              b.bits, Ctx())
    r2 = system.short.forward(system.store, system.demod, pre.f_rf, pre.w_rf, zero, b.pilot_noise_eq, b.data_noise,
                              1 - b.bits, Ctx())
    assert np.array_equal(r1.probs, r2.probs)  # output independent of the payload


# --- zero padding ------------------------------------------------------------------


def test_zero_pad_pilots_cases():
    a = RngStream(4).normal((3, 4))
    assert np.array_equal(zero_pad_pilots(a, 4), a)
    p = zero_pad_pilots(a, 2)
    assert np.all(p[:, 2:] == 0) and np.array_equal(p[:, :2], a[:, :2])
    with pytest.raises(DomainError):
        zero_pad_pilots(a, 5)


def test_reduced_pilot_length_forward_valid():
    system = build_tiny()
    b = _batch(system)
    r = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, Ctx(),
                            active_len=4)
    r.precoders.check()
    assert np.all(np.isfinite(r.probs))


def test_zero_pad_rf_cases():
    rng = RngStream(5)
    f_rf = phases_to_analog(rng.uniform(0, 6, 32), 8, 4)
    w_rf = phases_to_analog(rng.uniform(0, 6, 16), 4, 4)
    pre = PrecoderSet(f_rf, rng.normal((4, 2)) + 0j, w_rf, rng.normal((4, 2)) + 0j)
    h4 = rng.normal((4, 4)) + 1j * rng.normal((4, 4))
    same, p_same = zero_pad_rf(h4, pre, (4, 4))
    assert np.array_equal(same, h4) and np.array_equal(p_same.f_rf, f_rf)
    h2 = rng.normal((2, 2)) + 1j * rng.normal((2, 2))
    pad, p2 = zero_pad_rf(h2, pre, (2, 2))
    assert np.count_nonzero(pad) == 4 and np.array_equal(pad[:2, :2], h2)
    assert np.all(p2.f_rf[:, 2:] == 0) and np.all(p2.f_bb[2:] == 0)
    with pytest.raises(DomainError):
        zero_pad_rf(h2, pre, (5, 2))


def test_reduced_rf_forward_invariants():
    s4 = TwoScaleSystem.build(SystemDims(8, 4, 4, 3, 2, pilot_len=8, bits=24, bits_eq=8), RngStream(1, INIT),
                              NetOptions(dropout=0.0), window=1)
    b = LinkSource(RngStream(6), tiny_data(s4.dims)).draw(32)
    r = s4.long.forward(s4.store, s4.demod, b.h, b.pilot_noise, b.data_noise, b.bits, Ctx(), rf_active=(2, 2))
    r.precoders.check(active=(2, 2))
    assert np.all(r.precoders.f_rf[..., 2:] == 0) and np.all(r.precoders.w_rf[..., 2:] == 0)
    rs = s4.short.forward(s4.store, s4.demod, r.precoders.f_rf, r.precoders.w_rf, b.h, b.pilot_noise_eq,
                          b.data_noise, b.bits, Ctx(), rf_active=(2, 2))
    rs.precoders.check(active=(2, 2))


# --- two-step quantizer -------------------------------------------------------------


def test_two_step_accounting_and_levels():
    assert TwoStepResult(8).bits(4) == 32
    codes = np.tanh(RngStream(7).normal((5000, 3)))
    for q in (1, 3):
        books = fit_code_codebooks(codes, q)
        assert all(len(cb.levels) == 2**q for cb in books)


def test_fit_codebook_degenerate_falls_back():
    codes = np.zeros((100, 2))
    codes[:, 1] = np.linspace(-1, 1, 100)
    books = fit_code_codebooks(codes, 2)
    assert np.allclose(books[0].levels, [-0.75, -0.25, 0.25, 0.75])


# --- training -----------------------------------------------------------------------


def test_schedule_validation_and_rates():
    with pytest.raises(ConfigError):
        TrainSchedule(epochs=0)
    s = TrainSchedule(lr=1e-2, lr_decay=0.5, lr_every=2)
    assert s.lr_at(3) == pytest.approx(5e-3) and s.alpha_at(10) == pytest.approx(4.0)


def test_single_training_short_run_log():
    system = build_tiny()
    log = train_single_timescale(system, tiny_data(system.dims), TrainSchedule(epochs=3, steps_per_epoch=4,
                                                                                   batch_size=32, lr=3e-3))
    assert len(log.rows) == 3 and [r.alpha for r in log.rows] == [2.0, 2.2, 2.4]


def test_divergence_writes_diagnostic(tmp_path):
    system = build_tiny()
    system.store["demod/net.2.b"].value[...] = np.nan
    with pytest.raises(NumericalError):
        train_single_timescale(system, tiny_data(system.dims), TrainSchedule(epochs=1, steps_per_epoch=1,
                                                                             batch_size=8), diag_dir=tmp_path)
    assert (tmp_path / "diverged.ckpt").exists()


def test_two_timescale_log_lengths():
    system = build_tiny(window=3)
    sched = TrainSchedule(epochs=2, steps_per_epoch=1, batch_size=16)
    log = train_two_timescale(system, tiny_data(system.dims), sched)
    assert len(log.series("short")) == 2 and len(log.series("long")) == 2


@pytest.mark.slow
def test_two_timescale_learns():
    system = build_tiny(window=3)
    data = tiny_data(system.dims)
    before = evaluate("dnn-two", system.dims, data, 2000, system=system, seed=5)
    log = train_two_timescale(system, data, TrainSchedule(epochs=50, steps_per_epoch=2, batch_size=128, lr=3e-3,
                                                          lr_every=20))
    for kind in ("short", "long"):
        s = log.series(kind)
        assert len(s) == 50 and s[-1].bce < s[0].bce
    after = evaluate("dnn-two", system.dims, data, 2000, system=system, seed=5)
    assert after.ber <= 0.5 * before.ber


# --- evaluation -----------------------------------------------------------------------


def test_evaluate_guards():
    d = SystemDims.tiny()
    with pytest.raises(EmptyResultError):
        evaluate("identity", d, tiny_data(d), 0)
    with pytest.raises(ConfigError):
        evaluate("dnn-two", d, tiny_data(d), 10)
    with pytest.raises(ConfigError):
        evaluate("nope", d, tiny_data(d), 10)


@pytest.mark.parametrize("snr", [0.0, 5.0, 10.0])
def test_identity_chain_matches_closed_form(snr):
    d = SystemDims.tiny()
    r = evaluate("identity", d, tiny_data(d, snr), 50000, seed=2)
    p = qpsk_ber_awgn(snr)
    assert abs(r.ber - p) <= 3 * np.sqrt(p * (1 - p) / r.n_bits)


def test_two_timescale_slot_accounting():
    system = build_tiny(window=3)
    d = system.dims
    r = evaluate("dnn-two", d, tiny_data(d), 100, system=system)
    assert (r.short_forwards, r.long_forwards, r.priming_forwards) == (90, 10, 1)
    assert r.signaling_bits == signaling_overhead("dnn-two", 10, 10, b=24, b_t=8)


def test_delay_rules():
    d = SystemDims.tiny()
    ds = DelaySettings(100.0, 1e-3)
    q_s = scheme_overhead("dnn-single", d)
    assert scheme_delay("dnn-single", d, ds) == pytest.approx(1e-3)
    assert scheme_delay("dnn-two", d, ds) == pytest.approx(1e-3 * scheme_overhead("dnn-two", d) / q_s)
    assert scheme_delay("svd-perfect", d, ds) == 1e-3 and scheme_delay("dnn-two", d, None) == 0.0


def test_evaluation_deterministic():
    system = build_tiny()
    d = system.dims
    a = evaluate("dnn-single", d, tiny_data(d), 500, system=system, seed=4)
    b = evaluate("dnn-single", d, tiny_data(d), 500, system=system, seed=4)
    assert (a.bit_errors, a.bce) == (b.bit_errors, b.bce)


def test_trained_ber_monotone_in_snr(trained_tiny):
    s = trained_tiny.system
    res = [evaluate("dnn-single", s.dims, tiny_data(s.dims, snr), 3000, system=s, seed=6) for snr in (0, 10, 20)]
    for lo, hi in zip(res, res[1:]):
        assert hi.ber <= lo.ber + hi.ber_ci + lo.ber_ci


# --- persistence and transfer -------------------------------------------------------------


def test_system_roundtrip(tmp_path):
    system = build_tiny(window=3)
    st_ = LongTermPhaseState(np.arange(16.0), np.arange(8.0), t=5)
    save_system(tmp_path / "s.ckpt", system, {"epoch": 1}, st_)
    back, meta, state = load_system(tmp_path / "s.ckpt")
    assert stores_equal(system.store, back.store) and back.long.window == 3 and back.dims == system.dims
    assert state.t == 5 and np.array_equal(state.phi_f, st_.phi_f)


def test_transfer_frozen_exact_and_trace():
    system = build_tiny()
    frozen = last_layer_policy(system)
    before = {n: system.store[n].value.copy() for n in system.store.params if frozen(n)}
    bufs = {k: v.copy() for k, v in system.store.buffers.items()}
    res = transfer_finetune(system, tiny_data(system.dims), frozen, steps=100, batch_size=32)
    assert len(res.trace) == 100
    assert all(np.array_equal(system.store[n].value, v) for n, v in before.items())
    changed = [k for k in bufs if not np.array_equal(bufs[k], system.store.buffers[k])]
    assert all(not frozen(k.rsplit(".", 1)[0] + ".gamma") for k in changed)
    with pytest.raises(ConfigError):
        transfer_finetune(system, tiny_data(system.dims), lambda n: True, steps=1)


def test_transfer_on_drifted_channel(trained_tiny):
    import copy
    system = copy.deepcopy(trained_tiny.system)
    base = tiny_data(system.dims)
    base.stats = ChannelStatistics(half_width=np.pi / 4)
    data = drifted(base, aoa_deg=10)
    held = LinkSource(RngStream(77), data).draw(1024)

    def loss():
        r = system.long.forward(system.store, system.demod, held.h, held.pilot_noise, held.data_noise, held.bits,
                                Ctx())
        return float(r.loss.value), ber(held.bits.reshape(1024, -1), r.probs)

    l0, _ = loss()
    res = transfer_finetune(system, data, last_layer_policy(system), steps=200, batch_size=128, lr=1e-3)
    assert len(res.trace) == 200
    assert loss()[0] < l0
