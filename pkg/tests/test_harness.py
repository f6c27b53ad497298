import numpy as np
import pytest

from conftest import build_tiny, tiny_data
from hbflink.errors import ConfigError, IntegrityError, ParseError
from hbflink.harness.cli import main
from hbflink.harness.config import config_from_dict, load_config, resolve_output, write_config
from hbflink.harness.plot import emit_plot, read_results
from hbflink.harness.sweep import checkpoint_cycle, run_sweep
from hbflink.twoscale.persist import load_system


def _baseline_cfg(tmp_path, **kw):
    raw = {"profile": "tiny", "schemes": [], "baselines": ["svd-perfect"], "n_eval": 400,
           "sweep": {"axis": "snr", "values": [0, 10, 20]}, "output_dir": str(tmp_path / "run")}
    raw.update(kw)
    return config_from_dict(raw)


# --- config ---------------------------------------------------------------------------


def test_config_defaults_and_roundtrip(tmp_path):
    cfg = config_from_dict({"profile": "tiny", "snr_db": 5})
    assert cfg.dims.n_t == 8 and cfg.snr_db == 5.0
    path = write_config(cfg, tmp_path / "c.yaml")
    assert load_config(path).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("raw", [
    {"nonsense": 1},
    {"sweep": {"axis": "snr", "values": [10, 5]}},
    {"sweep": {"axis": "snr", "values": [5, 5]}},
    {"sweep": {"axis": "bogus", "values": [1]}},
    {"sweep": {"axis": "pilot-len", "values": [1, 99]}},
    {"sweep": {"axis": "bits", "values": [1.5]}},
    {"schemes": ["dnn-three"]},
    {"profile": "huge"},
    {"channel": {"typo": 1}},
    {"n_eval": 0},
])
def test_config_rejects(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_output_env(monkeypatch, tmp_path):
    monkeypatch.setenv("HBFLINK_OUT", str(tmp_path))
    assert resolve_output("runs/x") == tmp_path / "runs/x"
    assert resolve_output("/abs/x") == resolve_output("/abs/x").__class__("/abs/x")


# --- sweeps -------------------------------------------------------------------------------


def test_sweep_baseline_only_deterministic(tmp_path):
    cfg = _baseline_cfg(tmp_path)
    rows = run_sweep(cfg)
    first = (cfg.out_path / "results.csv").read_bytes()
    assert [r.scheme for r in rows] == ["svd-perfect"] * 3
    run_sweep(cfg)
    assert (cfg.out_path / "results.csv").read_bytes() == first
    assert (cfg.out_path / "config.yaml").exists() and (cfg.out_path / "timing.csv").exists()
    bers = [r.ber for r in rows]
    assert bers[0] >= bers[1] >= bers[2]


def test_sweep_empty_baselines_gives_dnn_rows(tmp_path):
    cfg = config_from_dict({"profile": "tiny", "schemes": ["dnn-single"], "baselines": [], "n_eval": 200,
                            "schedule": {"epochs": 1, "steps_per_epoch": 2, "batch_size": 16},
                            "output_dir": str(tmp_path / "run")})
    rows = run_sweep(cfg)
    assert [r.scheme for r in rows] == ["dnn-single"]
    assert (cfg.out_path / "checkpoints" / "dnn-single.ckpt").exists()
    # a second run reuses the checkpoint without training
    cfg2 = config_from_dict({**cfg.to_dict(), "train": False})
    assert run_sweep(cfg2)[0].bit_errors == rows[0].bit_errors


def test_sweep_missing_checkpoint_without_training(tmp_path):
    cfg = config_from_dict({"profile": "tiny", "schemes": ["dnn-two"], "baselines": [], "train": False,
                            "output_dir": str(tmp_path / "run")})
    with pytest.raises(ConfigError):
        run_sweep(cfg)


# --- plots -----------------------------------------------------------------------------------


def test_plot_deterministic_and_single_row(tmp_path):
    cfg = _baseline_cfg(tmp_path, sweep={"axis": "snr", "values": [10]})
    run_sweep(cfg)
    csv = cfg.out_path / "results.csv"
    a = emit_plot(csv, tmp_path / "a.svg").read_bytes()
    b = emit_plot(csv, tmp_path / "b.svg").read_bytes()
    assert a == b and a.startswith(b"<?xml")


@pytest.mark.parametrize("text,where", [
    ("scheme,value\nx,1\n", "line 1"),
    ("# c\nscheme,value,ber\nx,1,0.1\ny,2\n", "line 4"),
    ("scheme,value,ber\nx,1,1.5\n", "line 2"),
    ("scheme,value,ber\n", "line 1"),
    ("", "line 1"),
])
def test_plot_parse_errors(tmp_path, text, where):
    p = tmp_path / "r.csv"
    p.write_text(text)
    with pytest.raises(ParseError, match=where):
        read_results(p)


def test_plot_names_missing_column(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("scheme,value\nx,1\n")
    with pytest.raises(ParseError, match="'ber'"):
        read_results(p)


# --- checkpoint cycle ---------------------------------------------------------------------------


def test_checkpoint_cycle(tmp_path):
    system = build_tiny(seed=3)
    rep = checkpoint_cycle(system, tiny_data(system.dims), tmp_path / "s.ckpt", n_eval=300)
    assert rep.equal
    raw = (tmp_path / "s.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(IntegrityError):
        load_system(tmp_path / "t.ckpt")


# --- CLI ------------------------------------------------------------------------------------------


def test_cli_overhead(capsys):
    assert main(["overhead"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    bits = {ln.split(",")[0]: int(ln.split(",")[-1]) for ln in lines[1:]}
    assert bits == {"conv-single": 819200, "conv-two": 93440, "dnn-single": 6400, "dnn-two": 2080}


def test_cli_config_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "c.yaml"
    bad.write_text("sweep: {axis: snr, values: [3, 1]}\n")
    assert main(["sweep", "--config", str(bad)]) == 2
    assert "strictly increasing" in capsys.readouterr().err


def test_cli_evaluate_needs_checkpoint(capsys):
    assert main(["evaluate", "--scheme", "dnn-single", "--profile", "tiny"]) == 2


def test_cli_plot_parse_error(tmp_path, capsys):
    p = tmp_path / "r.csv"
    p.write_text("scheme,value\n")
    assert main(["plot", str(p)]) == 2


def test_cli_train_evaluate_sweep_plot(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HBFLINK_OUT", str(tmp_path))
    base = ["--profile", "tiny", "--epochs", "1", "--steps", "2", "--batch-size", "16", "--output-dir", "cli"]
    assert main(["train", *base]) == 0
    ckpt = tmp_path / "cli" / "checkpoints" / "dnn-single.ckpt"
    assert ckpt.exists() and (tmp_path / "cli" / "config.yaml").exists()
    capsys.readouterr()
    assert main(["evaluate", "--scheme", "dnn-single", "--checkpoint", str(ckpt), "--n-eval", "200",
                 "--profile", "tiny"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# hbflink-results v1\nscheme,")
    assert main(["sweep", *base, "--schemes", "dnn-single", "--baselines", "svd-perfect", "--values", "0,10",
                 "--n-eval", "200", "--no-train"]) == 0
    csv = tmp_path / "cli" / "results.csv"
    assert len(csv.read_text().splitlines()) == 2 + 4
    assert main(["plot", str(csv)]) == 0
    assert csv.with_suffix(".svg").exists()


def test_cli_evaluate_baseline_deterministic(capsys):
    args = ["evaluate", "--scheme", "svd-perfect", "--profile", "tiny", "--n-eval", "300"]
    main(args)
    a = capsys.readouterr().out
    main(args)
    assert capsys.readouterr().out == a


def test_cli_gradcheck(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out and all(line.startswith("PASS") for line in out)
    assert np.all([int(line.split()[-2]) >= 64 for line in out])
