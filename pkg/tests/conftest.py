import time
from dataclasses import dataclass

import pytest

from hbflink.channel import DatasetConfig
from hbflink.harness.config import config_from_dict
from hbflink.numerics import INIT, RngStream
from hbflink.twoscale import SystemDims, TwoScaleSystem, evaluate, train_single_timescale
from hbflink.twoscale.models import NetOptions
from hbflink.twoscale.training import TrainLog


def tiny_data(dims: SystemDims, snr_db: float = 10.0) -> DatasetConfig:
    return DatasetConfig(dims.n_t, dims.n_r, dims.n_s, dims.mod_order, dims.pilot_len, dims.pilot_len_eq, 3, 4, snr_db)


def build_tiny(seed: int = 0, window: int = 1, **kw) -> TwoScaleSystem:
    dims = SystemDims.tiny()
    return TwoScaleSystem.build(dims, RngStream(seed, INIT), NetOptions(dropout=0.0), window=window, **kw)


@dataclass
class Trained:
    system: TwoScaleSystem
    log: TrainLog
    seconds: float
    untrained_ber: float
    epochs: int


@pytest.fixture(scope="session")
def trained_tiny() -> Trained:
    """Single-timescale tiny model trained once with the tiny profile schedule (SNR 10 dB)."""
    cfg = config_from_dict({"profile": "tiny"})
    system = build_tiny()
    data = tiny_data(system.dims)
    before = evaluate("dnn-single", system.dims, data, 4000, system=system, seed=5)
    t0 = time.perf_counter()
    log = train_single_timescale(system, data, cfg.schedule)
    return Trained(system, log, time.perf_counter() - t0, before.ber, cfg.schedule.epochs)


# --- acceptance reporting ---------------------------------------------------------

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record_criterion(name: str, ok: bool, detail: str) -> None:
    """Store one acceptance line; the terminal summary prints them all."""
    ACCEPTANCE[name] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
