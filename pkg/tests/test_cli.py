import csv
import os

import numpy as np
import pytest

from tkgode.cli import GRADCHECK_DEFAULTS, main, parse_config_text, run_gradcheck
from tkgode.data import load_dataset
from tkgode.exceptions import ConfigError

CONFIG = """\
# tiny periodic run
dim = 4
history_length = 2
epochs = 2
backward_mode = unrolled
synth_entities = 8
synth_relations = 2
synth_timestamps = 12
output_dir = {out}
"""


def write_config(tmp_path, out, extra=""):
    path = tmp_path / "run.cfg"
    path.write_text(CONFIG.format(out=out) + extra)
    return path


def test_config_parsing():
    cfg = parse_config_text("dim = 8\nsynth_seed = 3\n")
    assert cfg.train.dim == 8 and cfg.synth_seed == 3
    with pytest.raises(ConfigError, match="unknown config keys: colour"):
        parse_config_text("colour = blue\n")
    with pytest.raises(ConfigError):
        parse_config_text("dim 8\n")


def test_train_outputs_and_determinism(tmp_path, capsys):
    out = tmp_path / "a"
    cfg = write_config(tmp_path, out)
    assert main(["train", str(cfg)]) == 0
    rows = list(csv.reader(open(out / "losses.csv")))
    assert rows[0] == ["epoch", "loss"] and len(rows) == 3
    assert (out / "checkpoint.txt").exists()
    resolved = (out / "config.resolved.txt").read_text()
    assert "dim = 4" in resolved and "learning_rate = 0.001" in resolved
    first = (out / "losses.csv").read_bytes(), (out / "checkpoint.txt").read_bytes()
    assert main(["train", str(cfg)]) == 0
    assert first == ((out / "losses.csv").read_bytes(), (out / "checkpoint.txt").read_bytes())


def test_output_env_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, tmp_path / "ignored")
    monkeypatch.setenv("TKGODE_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["train", str(cfg)]) == 0
    assert (tmp_path / "env" / "checkpoint.txt").exists()
    assert not (tmp_path / "ignored").exists()


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, tmp_path / "o", "data_dir = /no/such/place\n")
    assert main(["train", str(cfg)]) == 2
    assert "/no/such/place" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("dim = 4\nwidth = 3\n")
    assert main(["train", str(bad)]) == 2
    assert main(["train", str(tmp_path / "missing.cfg")]) == 2
    assert main(["frobnicate"]) == 2


def test_eval_settings_and_horizon(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = write_config(tmp_path, out)
    assert main(["train", str(cfg)]) == 0
    ckpt = str(out / "checkpoint.txt")
    assert main(["eval", ckpt, str(cfg), "--setting", "ta", "--subset", "full"]) == 0
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert len(rows) == 1 and rows[0]["setting"] == "time_aware" and rows[0]["subset"] == "full"
    ranks = (out / "ranks.jsonl").read_text().splitlines()
    assert len(ranks) == int(rows[0]["n_queries"])
    assert main(["eval", ckpt, str(cfg), "--horizon", "3"]) == 0
    assert next(csv.DictReader(open(out / "metrics.csv")))["subset"] == "horizon_3"
    assert main(["eval", ckpt, str(cfg), "--setting", "raw", "--subset", "inductive"]) == 0


def test_eval_incompatible_checkpoint(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = write_config(tmp_path, out)
    assert main(["train", str(cfg)]) == 0
    other = tmp_path / "other.cfg"
    other.write_text(CONFIG.format(out=out).replace("dim = 4", "dim = 5"))
    code = main(["eval", str(out / "checkpoint.txt"), str(other)])
    assert code != 0
    err = capsys.readouterr().err
    assert "expected (12, 5), found (12, 4)" in err


def test_synth(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["--pattern", "jump_consequence", "--entities", "20", "--relations", "4",
            "--timestamps", "40", "--seed", "5"]
    assert main(["synth", str(a)] + args) == 0
    assert main(["synth", str(b)] + args) == 0
    for name in ("train.txt", "valid.txt", "test.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ts = {n: np.loadtxt(a / f"{n}.txt", dtype=int)[:, 3] for n in ("train", "valid", "test")}
    assert (ts["train"].min(), ts["train"].max()) == (0, 31)
    assert (ts["valid"].min(), ts["valid"].max()) == (32, 35)
    assert (ts["test"].min(), ts["test"].max()) == (36, 39)
    events = set()
    for n in ("train", "valid", "test"):
        events |= set(map(tuple, np.loadtxt(a / f"{n}.txt", dtype=int).tolist()))
    for s, r, o, t in events:
        if r % 2 == 0 and t < 39:
            assert (s, r + 1, o, t + 1) in events
    store = load_dataset(a)
    assert store.train_end == 32 and store.valid_end == 36


def test_synth_and_train_from_files(tmp_path):
    data = tmp_path / "data"
    assert main(["synth", str(data), "--entities", "8", "--relations", "2",
                 "--timestamps", "12"]) == 0
    cfg = write_config(tmp_path, tmp_path / "o", f"data_dir = {data}\n")
    assert main(["train", str(cfg)]) == 0


def test_gradcheck_report(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    for group in ("H_global", "layer0.W_ent", "layer1.delta", "jump.W_rel", "decoder.core"):
        assert group in out


def test_gradcheck_negative_control(capsys):
    report = run_gradcheck(GRADCHECK_DEFAULTS, corrupt="jump.W_ent")
    assert report["jump.W_ent"] > 1e-4
    assert main(["gradcheck", "--corrupt", "layer0.W_rel"]) == 1
