"""Command line: train, evaluate, sweep, overhead, gradcheck, plot.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
Relative output directories are placed under ``$HBFLINK_OUT`` when set.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from ..baselines.overhead import SCHEMES as OVERHEAD_SCHEMES
from ..baselines.overhead import signaling_overhead
from ..errors import ConfigError, ConstraintError, DegenerateError, NumericalError, ParseError
from ..twoscale.evaluation import SCHEMES, DelaySettings, evaluate
from ..twoscale.persist import load_system, save_system
from .config import AXES, config_from_dict, write_config
from .gradsuite import TOL, run_gradient_suite
from .plot import emit_plot
from .sweep import ResultRow, data_config, rows_to_csv, run_sweep, train_system, write_train_log

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _raw_config(args) -> dict:
    raw: dict = {}
    if getattr(args, "config", None):
        try:
            raw = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot load {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{args.config}: top level must be a mapping")
    if getattr(args, "profile", None):
        raw["profile"] = args.profile
    sched = {k: v for k, v in (("epochs", args.epochs), ("steps_per_epoch", args.steps), ("lr", args.lr),
                               ("batch_size", args.batch_size)) if v is not None}
    if sched:
        raw.setdefault("schedule", {}).update(sched)
        raw.setdefault("schedule_two", {}).update(sched)
    for key in ("snr_db", "n_eval", "output_dir", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            raw[key] = v
    if getattr(args, "seed", None) is not None:
        raw.setdefault("seeds", {}).update(init=args.seed, train=args.seed)
    if getattr(args, "delay", False):
        raw.setdefault("channel", {})["delay"] = True
    if getattr(args, "doppler", None) is not None:
        raw.setdefault("channel", {})["doppler_hz"] = args.doppler
    return raw


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--profile", choices=("tiny", "desk", "paper"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps", type=int, help="steps (single) or frames (two-timescale) per epoch")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--n-eval", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--doppler", type=float)
    p.add_argument("--delay", action="store_true", help="data over the delayed channel")


def cmd_train(args) -> int:
    cfg = config_from_dict(_raw_config(args))
    out = cfg.out_path / "checkpoints"
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, cfg.out_path / "config.yaml")
    system, tl = train_system(cfg, cfg.dims, args.scheme, out)
    path = save_system(out / f"{args.scheme}.ckpt", system, cfg.schedule.to_dict())
    write_train_log(tl, out / f"{args.scheme}.train.csv")
    last = tl.rows[-1]
    print(f"saved {path}  final bce {last.bce:.4f}  ber {last.ber:.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    raw = _raw_config(args)
    system = None
    if args.checkpoint:
        system, _, _ = load_system(args.checkpoint)
        raw["dims"] = system.dims.to_dict()
    elif args.scheme.startswith("dnn"):
        raise ConfigError(f"scheme {args.scheme} needs --checkpoint")
    cfg = config_from_dict(raw)
    dims = system.dims if system is not None else cfg.dims
    delay = DelaySettings(cfg.channel.doppler_hz, cfg.channel.tau_single) if cfg.channel.delay else None
    r = evaluate(args.scheme, dims, data_config(cfg, dims, cfg.snr_db), cfg.n_eval, system=system,
                 seed=cfg.seeds.eval, delay=delay)
    row = ResultRow.from_eval(r, "snr", cfg.snr_db, 0.0)
    sys.stdout.write(rows_to_csv([row]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw = _raw_config(args)
    if args.axis or args.values:
        sw = raw.setdefault("sweep", {})
        if args.axis:
            sw["axis"] = args.axis
        if args.values:
            sw["values"] = [float(v) for v in args.values.split(",")]
    if args.schemes is not None:
        raw["schemes"] = [s for s in args.schemes.split(",") if s]
    if args.baselines is not None:
        raw["baselines"] = [s for s in args.baselines.split(",") if s]
    if args.no_train:
        raw["train"] = False
    cfg = config_from_dict(raw)
    rows = run_sweep(cfg)
    print(f"{len(rows)} rows -> {cfg.out_path / 'results.csv'}")
    return EXIT_OK


def cmd_overhead(args) -> int:
    kw = dict(b_c=args.b_c, n_r=args.n_r, n_t=args.n_t, n_r_rf=args.n_r_rf, n_t_rf=args.n_t_rf, b=args.b,
              b_t=args.b_t)
    print("scheme,t_f,t_s,bits")
    for s in OVERHEAD_SCHEMES:
        print(f"{s},{args.t_f},{args.t_s},{signaling_overhead(s, args.t_f, args.t_s, **kw)}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    ok = True
    for name, rep in run_gradient_suite(args.seed or 0).items():
        good = rep.passed(TOL) and rep.n_coords >= 64
        ok &= good
        print(f"{'PASS' if good else 'FAIL'} {name}: max rel err {rep.max_rel_err:.2e} over {rep.n_coords} coords")
    if not ok:
        raise NumericalError("gradient check failed")
    return EXIT_OK


def cmd_plot(args) -> int:
    out = args.out or str(Path(args.csv).with_suffix(".svg"))
    print(emit_plot(args.csv, out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hbflink", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="train one learned scheme and save a checkpoint")
    _common(p)
    p.add_argument("--scheme", choices=("dnn-single", "dnn-two"), default="dnn-single")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="Monte Carlo BER / BCE of one scheme")
    _common(p)
    p.add_argument("--scheme", choices=SCHEMES, required=True)
    p.add_argument("--checkpoint")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sweep", help="evaluate schemes along one axis and write results.csv")
    _common(p)
    p.add_argument("--axis", choices=AXES)
    p.add_argument("--values", help="comma-separated, strictly increasing")
    p.add_argument("--schemes", help="comma-separated learned schemes (empty for none)")
    p.add_argument("--baselines", help="comma-separated baselines (empty for none)")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-train", action="store_true", help="require existing checkpoints")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("overhead", help="signaling bits per superframe, one CSV line per scheme")
    for flag, default in (("--t-f", 10), ("--t-s", 10), ("--b-c", 4), ("--n-r", 32), ("--n-t", 64),
                          ("--n-r-rf", 4), ("--n-t-rf", 8), ("--b", 64), ("--b-t", 16)):
        p.add_argument(flag, type=int, default=default)
    p.set_defaults(fn=cmd_overhead)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer kind")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("plot", help="SVG line chart from a results CSV")
    p.add_argument("csv")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_plot)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ConstraintError, DegenerateError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
