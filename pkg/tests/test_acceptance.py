"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Tolerances are the stated ones. A criterion that is not met fails its test;
nothing here is relaxed to make a result pass.
"""

import itertools
import shutil
import time

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from conftest import build_tiny, record_criterion, tiny_data
from hbflink.baselines.lloyd_max import lloyd_max_train
from hbflink.baselines.omp import angular_dictionary, omp_estimate, sensing_matrix
from hbflink.baselines.overhead import signaling_overhead
from hbflink.baselines.precoding import svd_hybrid_precode
from hbflink.channel import LinkSource, realize_channel, realize_delayed_channel, sample_channel_params
from hbflink.harness.config import config_from_dict
from hbflink.harness.gradsuite import TOL, run_gradient_suite
from hbflink.harness.sweep import checkpoint_cycle, run_sweep
from hbflink.nngine.layers import Ctx
from hbflink.numerics import INIT, RngStream, cgauss_array
from hbflink.phy import bce_loss, ber, qpsk_ber_awgn, transmit_power
from hbflink.twoscale import DelaySettings, NetOptions, SystemDims, TrainSchedule, TwoScaleSystem, evaluate
from hbflink.twoscale.adapters import apply_head, two_step_feedback_training
from hbflink.twoscale.persist import save_system

pytestmark = pytest.mark.acceptance


def _modulus_err(a, n: int) -> float:
    """Largest deviation of the nonzero analog entries from 1/sqrt(n)."""
    mag = np.abs(a)
    on = mag > 0.5 / np.sqrt(n)
    return float(np.max(np.abs(mag[on] - 1 / np.sqrt(n)))) if on.any() else 0.0


def _constraint_errors(pre, n_t, n_r) -> tuple[float, float]:
    p = transmit_power(pre.f_rf, pre.f_bb)
    return max(_modulus_err(pre.f_rf, n_t), _modulus_err(pre.w_rf, n_r)), float(np.max(np.abs(p - 1.0)))


# --- 1 ---------------------------------------------------------------------------------


def test_constraint_exactness(trained_tiny):
    t0 = time.perf_counter()
    untrained = build_tiny(seed=11, window=3)
    n_sets, mod_err, pow_err = 0, 0.0, 0.0
    for k, system in enumerate((untrained, trained_tiny.system)):
        d = system.dims
        src = LinkSource(RngStream(100 + k), tiny_data(d))
        for _ in range(50):
            b = src.draw(100)
            r = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, Ctx())
            rs = system.short.forward(system.store, system.demod, r.precoders.f_rf, r.precoders.w_rf, b.h,
                                      b.pilot_noise_eq, b.data_noise, b.bits, Ctx())
            for pre in (r.precoders, rs.precoders):
                m, p = _constraint_errors(pre, d.n_t, d.n_r)
                mod_err, pow_err = max(mod_err, m), max(pow_err, p)
                n_sets += pre.f_rf.shape[0]
    secs = time.perf_counter() - t0
    ok = n_sets >= 10**4 and mod_err <= 1e-9 and pow_err <= 1e-9 and secs < 60
    record_criterion("constraint exactness", ok, f"{n_sets} precoder sets, max modulus err {mod_err:.1e}, "
                     f"max power rel err {pow_err:.1e}, {secs:.1f} s")
    assert ok


# --- 2 ---------------------------------------------------------------------------------


def test_gradient_suite():
    t0 = time.perf_counter()
    reports = run_gradient_suite(0)
    secs = time.perf_counter() - t0
    worst = max(r.max_rel_err for r in reports.values())
    fewest = min(r.n_coords for r in reports.values())
    kinds = set(reports)
    ok = (worst <= TOL and fewest >= 64 and secs < 120 and any("binary" in k for k in kinds)
          and any("modulus" in k for k in kinds))
    record_criterion("gradient suite", ok, f"{len(kinds)} layer kinds, worst rel err {worst:.1e}, "
                     f"min coords {fewest}, {secs:.1f} s")
    assert ok


# --- 3 ---------------------------------------------------------------------------------


def test_channel_statistics():
    t0 = time.perf_counter()
    p = sample_channel_params(RngStream(21, 1), 3, 4, (100000,))
    e = float(np.mean(np.sum(np.abs(realize_channel(p, 8, 4)) ** 2, axis=(1, 2))) / 32)
    q = sample_channel_params(RngStream(22, 1), 3, 4, (1000,))
    same = np.array_equal(realize_delayed_channel(q, 8, 4, 100.0, 0.0), realize_channel(q, 8, 4))
    secs = time.perf_counter() - t0
    ok = abs(e - 1) <= 0.03 and same and secs < 60
    record_criterion("channel statistics", ok, f"E|H|^2/(NtNr) = {e:.4f}, zero-delay bit-equal {same}, {secs:.1f} s")
    assert ok


# --- 4 ---------------------------------------------------------------------------------


def _bce_oracle(lab, probs):
    total = 0.0
    for i in range(lab.shape[0]):
        for j in range(lab.shape[1]):
            y, p = lab[i, j], min(max(probs[i, j], 1e-12), 1 - 1e-12)
            total -= y * np.log(p) + (1 - y) * np.log(1 - p)
    return total / lab.shape[0]


def test_metric_oracles():
    t0 = time.perf_counter()
    grid = (0.0, 0.1, 0.5, 0.7, 1.0)
    ber_ok = bce_ok = True
    for lab in itertools.product((0, 1), repeat=4):
        lab2 = np.array(lab, float).reshape(2, 2)
        for pr in itertools.product(grid, repeat=4):
            p2 = np.array(pr).reshape(2, 2)
            dec = [int(p >= 0.5) for p in pr]
            ber_ok &= ber(lab2, p2) == sum(a != b for a, b in zip(lab, dec)) / 4
            bce_ok &= abs(bce_loss(lab2, p2) - _bce_oracle(lab2, p2)) <= 1e-12 * max(1.0, _bce_oracle(lab2, p2))
    d = SystemDims.tiny()
    dev = []
    for snr in (0, 5, 10):
        r = evaluate("identity", d, tiny_data(d, snr), 250000, seed=31)
        p = qpsk_ber_awgn(snr)
        dev.append(abs(r.ber - p) / np.sqrt(p * (1 - p) / r.n_bits))
        assert r.n_bits >= 10**6
    secs = time.perf_counter() - t0
    ok = ber_ok and bce_ok and max(dev) <= 3 and secs < 120
    record_criterion("metric oracles", ok, f"exhaustive 2x2 BER {ber_ok} BCE {bce_ok}, identity QPSK deviations "
                     f"{', '.join(f'{x:.2f}' for x in dev)} sigma, {secs:.1f} s")
    assert ok


# --- 5 ---------------------------------------------------------------------------------


def _separated_instance(seed: int):
    n_t, n_r = 16, 8
    d = angular_dictionary(n_t, n_r)
    s = np.sin(d.grid)
    idx = np.argmin(np.abs(s[None, :] - np.linspace(-0.85, 0.85, 12)[:, None]), axis=1)
    rng = RngStream(seed, 7)
    atoms = rng.generator.permutation(idx) * d.size + rng.generator.permutation(idx)
    gains = cgauss_array(rng, 12)
    h = d.atoms()[:, atoms] @ (gains / np.abs(gains) * (0.5 + rng.uniform(size=12)))
    x = cgauss_array(rng, (4, 48))
    x /= np.linalg.norm(x, axis=0)
    f = np.exp(1j * rng.uniform(0, 2 * np.pi, (48, n_t, 4))) / np.sqrt(n_t)
    w = np.exp(1j * rng.uniform(0, 2 * np.pi, (48, n_r, 4))) / np.sqrt(n_r)
    return d, sensing_matrix(x, f, w), h


def test_baseline_oracles():
    t0 = time.perf_counter()
    levels = lloyd_max_train(RngStream(41, 7).normal(200000), 1).levels
    lm_ok = np.all(np.abs(np.abs(levels) - 0.798) <= 0.01) and levels[0] < 0 < levels[1]
    d, phi, h = _separated_instance(42)
    y = phi @ h
    res = omp_estimate(y, phi, d, 12).residuals[-1]
    h6 = cgauss_array(RngStream(43, 7), (6, 6))
    pre = svd_hybrid_precode(h6, 6, 6, 2).precoders
    _, _, vh = np.linalg.svd(h6)
    ang = float(np.max(subspace_angles(pre.f_rf @ pre.f_bb, vh.conj().T[:, :2])))
    secs = time.perf_counter() - t0
    ok = lm_ok and res <= 1e-9 and ang <= 1e-6 and secs < 120
    record_criterion("baseline oracles", ok, f"Lloyd-Max levels {levels[0]:.4f} {levels[1]:.4f}, OMP residual "
                     f"{res:.1e}, svd_hybrid principal angle {ang:.1e}, {secs:.1f} s")
    assert ok


# --- 6 ---------------------------------------------------------------------------------

# (t_f, t_s, b_c, n_r, n_t, n_r_rf, n_t_rf, b, b_t) -> (Q_cs, Q_ct, Q_s, Q_t), computed by hand
OVERHEAD_CASES = [
    ((10, 10, 4, 32, 64, 4, 8, 64, 16), (819200, 93440, 6400, 2080)),
    ((1, 1, 4, 32, 64, 4, 8, 64, 16), (8192, 8192, 64, 64)),
    ((5, 20, 2, 8, 16, 2, 4, 24, 8), (25600, 2800, 2400, 880)),
    ((3, 7, 6, 4, 8, 2, 2, 40, 10), (4032, 1008, 840, 300)),
    ((100, 2, 1, 64, 256, 16, 16, 512, 128), (3276800, 1664000, 102400, 64000)),
]


def test_overhead_formulas():
    t0 = time.perf_counter()
    bad = []
    for (t_f, t_s, b_c, n_r, n_t, n_r_rf, n_t_rf, b, b_t), want in OVERHEAD_CASES:
        kw = dict(b_c=b_c, n_r=n_r, n_t=n_t, n_r_rf=n_r_rf, n_t_rf=n_t_rf, b=b, b_t=b_t)
        got = tuple(signaling_overhead(s, t_f, t_s, **kw) for s in ("conv-single", "conv-two", "dnn-single",
                                                                   "dnn-two"))
        if got != want:
            bad.append((got, want))
    secs = time.perf_counter() - t0
    ok = not bad and secs < 1
    record_criterion("overhead formulas", ok, f"{len(OVERHEAD_CASES) - len(bad)}/{len(OVERHEAD_CASES)} configs exact, "
                     f"{secs * 1e3:.1f} ms" + (f", mismatches {bad}" if bad else ""))
    assert ok


# --- 7 ---------------------------------------------------------------------------------


def test_desk_scale_learning(trained_tiny):
    s = trained_tiny.system
    data = tiny_data(s.dims)
    trained = evaluate("dnn-single", s.dims, data, 20000, system=s, seed=5)
    svd = evaluate("svd-perfect", s.dims, data, 20000, seed=5)
    series = trained_tiny.log.series("single")
    ratio = series[-1].bce / series[0].bce
    checks = {
        "vs untrained": trained.ber <= 0.5 * trained_tiny.untrained_ber,
        "vs svd-perfect": trained.ber <= 2 * svd.ber,
        "bce ratio": ratio < 0.5,
        "epochs": trained_tiny.epochs <= 50,
        "runtime": trained_tiny.seconds <= 15 * 60,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record_criterion("desk-scale learning", ok,
                     f"BER {trained.ber:.4f} (untrained {trained_tiny.untrained_ber:.4f}, svd-perfect {svd.ber:.4f}), "
                     f"final/first BCE {ratio:.3f}, {trained_tiny.epochs} epochs, {trained_tiny.seconds:.0f} s"
                     + (f"; unmet: {', '.join(failed)}" if failed else ""))
    assert ok


# --- 8 ---------------------------------------------------------------------------------


def test_two_timescale_structure():
    system = build_tiny(seed=2, window=3)
    d = system.dims
    data = tiny_data(d)
    # forwards are counted per batched chunk of trajectories: 5 trajectories in chunks of 2 -> 3 chunks
    r = evaluate("dnn-two", d, data, 5 * d.frames * d.slots, system=system, seed=8, chunk=2)
    n_frames = 3 * d.frames
    per_frame = (r.short_forwards / n_frames, r.long_forwards / n_frames)
    delay = DelaySettings(100.0, 1e-3)
    two = evaluate("dnn-two", d, data, 200, system=system, seed=8, delay=delay)
    single = evaluate("dnn-single", d, data, 200, system=system, seed=8, delay=delay)
    q_t = signaling_overhead("dnn-two", d.frames, d.slots, b=d.bits, b_t=d.bits_eq)
    q_s = signaling_overhead("dnn-single", d.frames, d.slots, b=d.bits)
    ok = (per_frame == (d.slots - 1, 1) and two.signaling_bits == q_t and single.signaling_bits == q_s
          and two.delay_s == pytest.approx(1e-3 * q_t / q_s) and single.delay_s == pytest.approx(1e-3))
    record_criterion("two-timescale structure", ok, f"per frame {per_frame[0]:g} short + {per_frame[1]:g} long "
                     f"(T_s = {d.slots}), signaling {two.signaling_bits} vs Q_t {q_t}, {single.signaling_bits} vs "
                     f"Q_s {q_s}, delays {two.delay_s:.2e} / {single.delay_s:.2e} s")
    assert ok


# --- 9 ---------------------------------------------------------------------------------


def test_generalization_adapters():
    system = build_tiny(seed=4)
    d = system.dims
    b = LinkSource(RngStream(51), tiny_data(d)).draw(256)
    worst = 0.0
    try:
        r = system.long.forward(system.store, system.demod, b.h, b.pilot_noise, b.data_noise, b.bits, Ctx(),
                                active_len=d.pilot_len // 2)
        r.precoders.check()
        worst = max(worst, *_constraint_errors(r.precoders, d.n_t, d.n_r))
        s4 = TwoScaleSystem.build(SystemDims(8, 4, 4, 3, 2, pilot_len=8, bits=24, bits_eq=8), RngStream(1, INIT),
                                  NetOptions(dropout=0.0), window=1)
        r4 = s4.long.forward(s4.store, s4.demod, b.h, b.pilot_noise, b.data_noise, b.bits, Ctx(), rf_active=(2, 2))
        r4.precoders.check(active=(2, 2))
        worst = max(worst, *_constraint_errors(r4.precoders, 8, 4))
        evaluate("dnn-single", d, tiny_data(d), 500, system=system, active_len=d.pilot_len // 2)
        evaluate("dnn-single", s4.dims, tiny_data(s4.dims), 500, system=s4, rf_active=(2, 2))
        adapters_ok = worst <= 1e-9
    except Exception as exc:  # a constraint violation is a criterion failure, reported below
        adapters_ok, worst = False, float("nan")
        err = repr(exc)
    else:
        err = ""
    t0 = time.perf_counter()
    tanh = build_tiny(seed=0, feedback="tanh")
    data = tiny_data(tanh.dims)
    step1 = TrainSchedule(epochs=50, steps_per_epoch=80, batch_size=256, lr=3e-3, lr_decay=0.5, lr_every=20)
    step2 = TrainSchedule(epochs=2, steps_per_epoch=80, batch_size=256, lr=1e-3, lr_decay=0.5, lr_every=20, seed=7)
    res = two_step_feedback_training(tanh, data, [8], step1, step2)
    apply_head(tanh, res, None)
    ber_tanh = evaluate("dnn-single", tanh.dims, data, 20000, system=tanh, seed=9).ber
    apply_head(tanh, res, 8)
    ber_q8 = evaluate("dnn-single", tanh.dims, data, 20000, system=tanh, seed=9).ber
    rel = abs(ber_q8 - ber_tanh) / ber_tanh
    ok = adapters_ok and rel <= 0.10
    record_criterion("generalization adapters", ok, f"zero-pad L1 = {d.pilot_len // 2} and RF (2, 2) of (4, 3) "
                     f"max constraint err {worst:.1e}{' ' + err if err else ''}; two-step Q = 8 BER {ber_q8:.4f} vs "
                     f"tanh {ber_tanh:.4f} (rel {rel:.3f}), {time.perf_counter() - t0:.0f} s")
    assert ok


# --- 10 --------------------------------------------------------------------------------


def test_determinism(trained_tiny, tmp_path):
    s = trained_tiny.system
    csv = []
    for run in ("a", "b"):
        out = tmp_path / run
        (out / "checkpoints").mkdir(parents=True)
        save_system(out / "checkpoints" / "dnn-single.ckpt", s)
        cfg = config_from_dict({"profile": "tiny", "schemes": ["dnn-single"], "baselines": ["svd-perfect", "svd-omp"],
                                "sweep": {"axis": "snr", "values": [0, 10]}, "n_eval": 1000, "train": False,
                                "output_dir": str(out)})
        run_sweep(cfg)
        csv.append((out / "results.csv").read_bytes())
    shutil.rmtree(tmp_path / "b")
    same_csv = csv[0] == csv[1]
    cyc = checkpoint_cycle(s, tiny_data(s.dims), tmp_path / "cycle.ckpt", n_eval=2000, seed=3)
    ok = same_csv and cyc.equal
    record_criterion("determinism", ok, f"rerun CSV byte-identical {same_csv} ({len(csv[0])} bytes), checkpoint "
                     f"round trip params {cyc.params_equal} eval {cyc.before.bit_errors}/{cyc.after.bit_errors} errors")
    assert ok
