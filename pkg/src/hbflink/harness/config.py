"""Experiment configuration: YAML schema, profiles and validation.

A config file is a YAML mapping. Every key is optional; missing keys take
the defaults of the chosen ``profile`` (``tiny``, ``desk`` or ``paper``).
The fully resolved config is written next to every run's outputs.

    profile: desk
    dims: {n_t: 16, n_r: 8, ...}           # overrides on the profile dims
    channel: {n_clusters: 3, n_rays: 4, doppler_hz: 100.0, tau_single: 0.001, delay: false}
    snr_db: 10.0                           # evaluation SNR for non-SNR sweeps
    train_snr_db: 10.0
    schedule: {epochs: 50, steps_per_epoch: 80, batch_size: 256, lr: 0.003, ...}
    schedule_two: {...}                    # two-timescale training, steps are frames
    net: {dropout: 0.0, residual: true, batchnorm: true}
    sweep: {axis: snr, values: [0, 5, 10]}
    schemes: [dnn-single, dnn-two]
    baselines: [svd-perfect, svd-omp]
    seeds: {init: 0, train: 0, eval: 1}
    n_eval: 2000
    train: true
    workers: 1
    output_dir: runs/default
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..twoscale.dims import SystemDims
from ..twoscale.models import NetOptions
from ..twoscale.training import TrainSchedule

OUT_ENV = "HBFLINK_OUT"
AXES = ("snr", "n_rf", "bits", "pilot-len", "delay", "q_rf")
DNN_SCHEMES = ("dnn-single", "dnn-two")
BASELINES = ("svd-perfect", "svd-omp")


@dataclass
class ChannelConfig:
    n_clusters: int = 3
    n_rays: int = 4
    doppler_hz: float = 100.0
    tau_single: float = 1e-3
    delay: bool = False


@dataclass
class SweepConfig:
    axis: str = "snr"
    values: list = field(default_factory=lambda: [10.0])


@dataclass
class Seeds:
    init: int = 0
    train: int = 0
    eval: int = 1


@dataclass
class ExperimentConfig:
    profile: str
    dims: SystemDims
    channel: ChannelConfig
    snr_db: float
    train_snr_db: float
    schedule: TrainSchedule
    schedule_two: TrainSchedule
    net: NetOptions
    sweep: SweepConfig
    schemes: list
    baselines: list
    seeds: Seeds
    n_eval: int
    train: bool
    workers: int
    output_dir: str

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_dict() if hasattr(v, "to_dict") else asdict(v) if hasattr(v, "__dataclass_fields__") \
                else v
        return out

    @property
    def out_path(self) -> Path:
        return resolve_output(self.output_dir)


def resolve_output(path: str) -> Path:
    """Relative output directories live under ``$HBFLINK_OUT`` when it is set."""
    p = Path(path)
    root = os.environ.get(OUT_ENV)
    return p if p.is_absolute() or not root else Path(root) / p


# --- profiles -------------------------------------------------------------------

_SCHEDULES = {
    "tiny": dict(epochs=50, steps_per_epoch=80, batch_size=256, lr=3e-3, lr_decay=0.5, lr_every=20),
    "desk": dict(epochs=60, steps_per_epoch=100, batch_size=256, lr=3e-3, lr_decay=0.5, lr_every=20),
    "paper": dict(epochs=200, steps_per_epoch=200, batch_size=512, lr=1e-3, lr_decay=0.5, lr_every=50),
}
_DIMS = {"tiny": SystemDims.tiny, "desk": SystemDims.desk, "paper": SystemDims.paper}


def profile_defaults(name: str) -> dict:
    if name not in _DIMS:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(_DIMS)}")
    sched = TrainSchedule(**_SCHEDULES[name]).to_dict()
    two = dict(sched, steps_per_epoch=max(1, sched["steps_per_epoch"] // 10))
    return {
        "profile": name,
        "dims": _DIMS[name]().to_dict(),
        "channel": asdict(ChannelConfig()),
        "snr_db": 10.0,
        "train_snr_db": 10.0,
        "schedule": sched,
        "schedule_two": two,
        "net": asdict(NetOptions(dropout=0.0)),
        "sweep": asdict(SweepConfig()),
        "schemes": list(DNN_SCHEMES),
        "baselines": list(BASELINES),
        "seeds": asdict(Seeds()),
        "n_eval": 2000,
        "train": True,
        "workers": 1,
        "output_dir": f"runs/{name}",
    }


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = dict(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where}{k!r}")
        if isinstance(base[k], dict) and k != "dims":
            if not isinstance(v, dict):
                raise ConfigError(f"config key {where}{k!r} must be a mapping")
            out[k] = _merge(base[k], v, f"{where}{k}.")
        elif isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError("dims must be a mapping")
            out[k] = {**base[k], **v}
        else:
            out[k] = v
    return out


def _build(cls, d: dict, what: str):
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"bad {what} section: {exc}") from exc


def config_from_dict(raw: dict | None) -> ExperimentConfig:
    raw = dict(raw or {})
    name = raw.get("profile", "desk")
    merged = _merge(profile_defaults(name), raw)
    dims = _build(SystemDims, merged["dims"], "dims")
    sweep = _build(SweepConfig, merged["sweep"], "sweep")
    if sweep.axis not in AXES:
        raise ConfigError(f"unknown sweep axis {sweep.axis!r}; choose from {AXES}")
    vals = [float(v) for v in sweep.values]
    if not vals:
        raise ConfigError("sweep needs at least one value")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"sweep values must be strictly increasing, got {sweep.values}")
    if sweep.axis in ("n_rf", "bits", "pilot-len", "q_rf"):
        if any(v != int(v) for v in vals):
            raise ConfigError(f"{sweep.axis} sweep values must be integers")
        vals = [int(v) for v in vals]
    sweep = SweepConfig(sweep.axis, vals)
    for s in merged["schemes"]:
        if s not in DNN_SCHEMES:
            raise ConfigError(f"unknown scheme {s!r}; choose from {DNN_SCHEMES}")
    for s in merged["baselines"]:
        if s not in BASELINES:
            raise ConfigError(f"unknown baseline {s!r}; choose from {BASELINES}")
    if int(merged["n_eval"]) < 1 or int(merged["workers"]) < 1:
        raise ConfigError("n_eval and workers must be >= 1")
    cfg = ExperimentConfig(
        profile=name,
        dims=dims,
        channel=_build(ChannelConfig, merged["channel"], "channel"),
        snr_db=float(merged["snr_db"]),
        train_snr_db=float(merged["train_snr_db"]),
        schedule=_build(TrainSchedule, merged["schedule"], "schedule"),
        schedule_two=_build(TrainSchedule, merged["schedule_two"], "schedule_two"),
        net=_build(NetOptions, merged["net"], "net"),
        sweep=sweep,
        schemes=list(merged["schemes"]),
        baselines=list(merged["baselines"]),
        seeds=_build(Seeds, merged["seeds"], "seeds"),
        n_eval=int(merged["n_eval"]),
        train=bool(merged["train"]),
        workers=int(merged["workers"]),
        output_dir=str(merged["output_dir"]),
    )
    _check_axis_ranges(cfg)
    return cfg


def _check_axis_ranges(cfg: ExperimentConfig) -> None:
    d, ax, vals = cfg.dims, cfg.sweep.axis, cfg.sweep.values
    if ax == "pilot-len" and (max(vals) > d.pilot_len or min(vals) < 1):
        raise ConfigError(f"pilot-len values must lie in [1, {d.pilot_len}]")
    if ax == "n_rf" and (max(vals) > d.n_t_rf or min(vals) < d.n_s):
        raise ConfigError(f"n_rf values must lie in [{d.n_s}, {d.n_t_rf}]")
    if ax == "bits":
        for v in vals:
            d.with_(bits=v)
    if ax == "delay" and min(vals) < 0:
        raise ConfigError("delay values must be non-negative")
    if ax == "q_rf" and min(vals) < 0:
        raise ConfigError("q_rf values must be >= 0")


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


def write_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    return path


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
