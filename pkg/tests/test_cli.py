import json

import pytest
import yaml

from chargenoise.cli import EXIT_ERROR, EXIT_OK, main
from chargenoise.config import ConfigError, RunConfig, load_config
from chargenoise.io import read_shots_csv, read_trace_csv


def _cfg(tmp_path, **d):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(d))
    return str(path)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"durration_s": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"noise": {"powerlaw": {"slope": 2}}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"protocol": "medium"})


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_seed_range(seed):
    with pytest.raises(ConfigError):
        RunConfig(seed=seed)


def test_hash_ignores_output_dir():
    a = RunConfig(out="a")
    assert a.config_hash() == RunConfig(out="b").config_hash()
    assert a.config_hash() != RunConfig(seed=1).config_hash()


def test_overrides_win(tmp_path):
    cfg = load_config(_cfg(tmp_path, seed=3, duration_s=2.0), seed=5)
    assert cfg.seed == 5 and cfg.duration_s == 2.0


def test_full_scale_run_needs_streaming():
    cfg = RunConfig(duration_s=3600.0)
    n_cycles = int(cfg.duration_s * cfg.params().shot_rate)
    # each repetition writes a parity row and a charge row
    assert n_cycles == 36_000_000 > cfg.stream_threshold


def test_simulate_is_deterministic(tmp_path):
    c = _cfg(tmp_path, duration_s=0.05)
    for name in ("a", "b"):
        assert main(["simulate", "--config", c, "--seed", "7", "--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("shots.csv", "environment.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["seed"] == 7 and m["n_shots"] == 1000 and not m["streamed"]
    assert (tmp_path / "a" / "resolved_config.yaml").exists()


def test_streaming_matches_in_memory(tmp_path):
    base = dict(duration_s=0.1)
    main(["simulate", "--config", _cfg(tmp_path, **base), "--out", str(tmp_path / "mem")])
    main(["simulate", "--config", _cfg(tmp_path, stream_threshold=1000, **base), "--out", str(tmp_path / "str")])
    m = json.loads((tmp_path / "str" / "manifest.json").read_text())
    assert m["streamed"] and m["n_shots"] == 2000
    assert (tmp_path / "mem" / "shots.csv").read_bytes() == (tmp_path / "str" / "shots.csv").read_bytes()


def test_zero_duration(tmp_path):
    assert main(["simulate", "--config", _cfg(tmp_path, duration_s=0.0), "--out", str(tmp_path)]) == EXIT_OK
    assert len(read_shots_csv(tmp_path / "shots.csv")) == 0


def test_analyze_shots_and_trace(tmp_path):
    main(["simulate", "--config", _cfg(tmp_path, duration_s=0.5), "--out", str(tmp_path / "fast")])
    assert main(["analyze", str(tmp_path / "fast" / "shots.csv"), "--out", str(tmp_path / "an")]) == EXIT_OK
    assert (tmp_path / "an" / "shots_psd.csv").exists()
    main(["simulate", "--config", _cfg(tmp_path, protocol="slow", duration_s=200.0, dt_s=0.2), "--out", str(tmp_path / "slow")])
    assert len(read_trace_csv(tmp_path / "slow" / "trace.csv")) == 10
    assert main(["analyze", str(tmp_path / "slow" / "trace.csv"), "--out", str(tmp_path / "an2")]) == EXIT_OK


def test_errors_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_s,kind,outcome,bias_ng_ext\n0.0,parity\n")
    assert main(["analyze", str(bad), "--out", str(tmp_path)]) == EXIT_ERROR
    bad.write_text("a,b\n1,2\n")
    assert main(["analyze", str(bad), "--out", str(tmp_path)]) == EXIT_ERROR
    assert main(["simulate", "--config", _cfg(tmp_path, colour="red"), "--out", str(tmp_path)]) == EXIT_ERROR
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == EXIT_ERROR
    assert main(["reproduce", "fig9", "--out", str(tmp_path)]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err
