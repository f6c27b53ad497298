"""Sweeps over one axis, CSV emission and the checkpoint round trip."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from ..baselines.precoding import LABEL as SVD_LABEL
from ..channel import DatasetConfig
from ..errors import ConfigError
from ..nngine.checkpoint import stores_equal
from ..numerics import INIT, RngStream
from ..twoscale.dims import SystemDims
from ..twoscale.evaluation import DelaySettings, EvalResult, evaluate
from ..twoscale.models import TwoScaleSystem
from ..twoscale.persist import load_system, save_system
from ..twoscale.training import TrainLog, train_single_timescale, train_two_timescale
from .config import ExperimentConfig, write_config

log = logging.getLogger(__name__)

CSV_SCHEMA = "# hbflink-results v1"
COLUMNS = ("scheme", "label", "axis", "value", "ber", "bce", "n_samples", "n_bits", "bit_errors", "ci_half_width",
           "bce_ci_half_width")
LABELS = {
    "dnn-single": "learned single-timescale",
    "dnn-two": "learned two-timescale",
    "svd-perfect": f"{SVD_LABEL} perfect CSI",
    "svd-omp": f"{SVD_LABEL} OMP + parameter feedback",
}


@dataclass
class ResultRow:
    scheme: str
    axis: str
    value: float
    ber: float
    bce: float
    n_samples: int
    n_bits: int
    bit_errors: int
    ci_half_width: float
    bce_ci_half_width: float
    wall_time: float = 0.0

    @classmethod
    def from_eval(cls, r: EvalResult, axis: str, value, wall: float) -> "ResultRow":
        return cls(r.scheme, axis, value, r.ber, r.bce, r.n_samples, r.n_bits, r.bit_errors, r.ber_ci, r.bce_ci,
                   wall)

    def record(self) -> list[str]:
        return [self.scheme, LABELS.get(self.scheme, self.scheme), self.axis, repr(self.value), repr(self.ber),
                repr(self.bce), str(self.n_samples), str(self.n_bits), str(self.bit_errors),
                repr(self.ci_half_width), repr(self.bce_ci_half_width)]


def rows_to_csv(rows: list[ResultRow]) -> str:
    """Deterministic CSV text; wall times are kept out so reruns are byte-identical."""
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.record())
    return buf.getvalue()


# --- data and models ---------------------------------------------------------


def data_config(cfg: ExperimentConfig, dims: SystemDims, snr_db: float) -> DatasetConfig:
    c = cfg.channel
    return DatasetConfig(dims.n_t, dims.n_r, dims.n_s, dims.mod_order, dims.pilot_len, dims.pilot_len_eq,
                         c.n_clusters, c.n_rays, snr_db)


def build_system(cfg: ExperimentConfig, dims: SystemDims, scheme: str) -> TwoScaleSystem:
    window = 1 if scheme == "dnn-single" else dims.window
    return TwoScaleSystem.build(dims, RngStream(cfg.seeds.init, INIT), cfg.net, window=window)


def train_system(cfg: ExperimentConfig, dims: SystemDims, scheme: str, diag_dir: Path | None = None
                 ) -> tuple[TwoScaleSystem, TrainLog]:
    system = build_system(cfg, dims, scheme)
    data = data_config(cfg, dims, cfg.train_snr_db)
    if scheme == "dnn-single":
        sched = cfg.schedule
        sched = type(sched)(**{**sched.to_dict(), "seed": cfg.seeds.train})
        return system, train_single_timescale(system, data, sched, diag_dir)
    sched = cfg.schedule_two
    sched = type(sched)(**{**sched.to_dict(), "seed": cfg.seeds.train})
    return system, train_two_timescale(system, data, sched, diag_dir)


def write_train_log(tl: TrainLog, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "slot_type", "bce", "ber", "alpha", "lr", "gamma"))
        for r in tl.rows:
            w.writerow((r.epoch, r.slot_type, repr(r.bce), repr(r.ber), repr(r.alpha), repr(r.lr), repr(r.gamma)))
    return path


def obtain_system(cfg: ExperimentConfig, dims: SystemDims, scheme: str, tag: str) -> TwoScaleSystem:
    """Load ``<out>/checkpoints/<tag>.ckpt`` or train and save it."""
    ck_dir = cfg.out_path / "checkpoints"
    path = ck_dir / f"{tag}.ckpt"
    if path.exists():
        system, _, _ = load_system(path)
        if system.dims != dims:
            raise ConfigError(f"checkpoint {path} was trained for different dims")
        return system
    if not cfg.train:
        raise ConfigError(f"checkpoint {path} is missing and training is disabled")
    ck_dir.mkdir(parents=True, exist_ok=True)
    log.info("training %s", tag)
    system, tl = train_system(cfg, dims, scheme, ck_dir)
    save_system(path, system, cfg.schedule.to_dict())
    write_train_log(tl, ck_dir / f"{tag}.train.csv")
    return system


# --- sweep ---------------------------------------------------------------------


@dataclass
class _Point:
    scheme: str
    value: float
    dims: SystemDims
    data: DatasetConfig
    kwargs: dict
    system: TwoScaleSystem | None


def _point_kwargs(cfg: ExperimentConfig, scheme: str, value):
    """(dims, data, evaluate kwargs) for one sweep point."""
    ax, d = cfg.sweep.axis, cfg.dims
    delay = DelaySettings(cfg.channel.doppler_hz, cfg.channel.tau_single) if cfg.channel.delay else None
    snr = cfg.snr_db
    kw: dict = {}
    dnn = scheme.startswith("dnn")
    if ax == "snr":
        snr = float(value)
    elif ax == "bits":
        d = d.with_(bits=int(value))
    elif ax == "n_rf":
        v = int(value)
        if dnn:
            kw["rf_active"] = (v, min(v, d.n_r_rf))
        else:
            d = d.with_(n_t_rf=v, n_r_rf=min(v, d.n_r_rf))
    elif ax == "pilot-len":
        v = int(value)
        if dnn:
            kw["active_len"] = v
        else:
            d = d.with_(pilot_len=v)
    elif ax == "delay":
        delay = DelaySettings(cfg.channel.doppler_hz, float(value))
    elif ax == "q_rf":
        kw["q_rf"] = int(value)
    kw["delay"] = delay
    return d, data_config(cfg, d, snr), kw


def _model_dims(cfg: ExperimentConfig, value) -> tuple[SystemDims, str]:
    if cfg.sweep.axis == "bits":
        return cfg.dims.with_(bits=int(value)), f"-bits{int(value)}"
    return cfg.dims, ""


def _run_point(p: _Point, n_eval: int, seed: int, axis: str) -> ResultRow:
    t0 = time.perf_counter()
    r = evaluate(p.scheme, p.dims, p.data, n_eval, system=p.system, seed=seed, **p.kwargs)
    return ResultRow.from_eval(r, axis, p.value, time.perf_counter() - t0)


def run_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    """One row per (scheme, sweep value); writes config, results CSV and a timing sidecar."""
    out = cfg.out_path
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.yaml")
    points: list[_Point] = []
    for value in cfg.sweep.values:
        for scheme in list(cfg.schemes) + list(cfg.baselines):
            dims, data, kw = _point_kwargs(cfg, scheme, value)
            system = None
            if scheme.startswith("dnn"):
                mdims, suffix = _model_dims(cfg, value)
                system = obtain_system(cfg, mdims, scheme, scheme + suffix)
                dims = mdims
            points.append(_Point(scheme, value, dims, data, kw, system))
    args = [(p, cfg.n_eval, cfg.seeds.eval, cfg.sweep.axis) for p in points]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            rows = list(ex.map(_run_point, *zip(*args)))
    else:
        rows = [_run_point(*a) for a in args]
    (out / "results.csv").write_text(rows_to_csv(rows))
    with (out / "timing.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scheme", "value", "wall_time_s"))
        for r in rows:
            w.writerow((r.scheme, repr(r.value), f"{r.wall_time:.3f}"))
    return rows


# --- checkpoint round trip --------------------------------------------------------


@dataclass
class CycleReport:
    params_equal: bool
    before: EvalResult
    after: EvalResult

    @property
    def equal(self) -> bool:
        b, a = self.before, self.after
        return self.params_equal and (b.bit_errors, b.ber, b.bce) == (a.bit_errors, a.ber, a.bce)


def checkpoint_cycle(system: TwoScaleSystem, data: DatasetConfig, path, scheme: str = "dnn-single",
                     n_eval: int = 1000, seed: int = 0) -> CycleReport:
    """Save, reload and evaluate both copies on identical draws."""
    save_system(path, system)
    loaded, _, _ = load_system(path)
    before = evaluate(scheme, system.dims, data, n_eval, system=system, seed=seed)
    after = evaluate(scheme, loaded.dims, data, n_eval, system=loaded, seed=seed)
    return CycleReport(stores_equal(system.store, loaded.store), before, after)
