import dataclasses
import subprocess
import sys

import numpy as np
import pytest

from stepping_stones.cli import main
from stepping_stones.ppo import load_checkpoint
from stepping_stones.pretrain import PretrainConfig

from _fixtures import tiny_config


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(tiny_config(iterations=2).to_toml())
    return path


def test_train_then_heatmap(tmp_path, cfg_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert (out / "iterations.csv").exists() and (out / "checkpoints" / "final.ckpt").exists()
    assert main(["heatmap", "--run", str(out), "--no-images"]) == 0
    assert sorted(p.name for p in (out / "heatmaps").iterdir()) == ["iter_0000.csv", "iter_0001.csv"]
    assert main(["eval-robustness", "--checkpoint", str(out / "checkpoints" / "final.ckpt"),
                 "--sequences", "2", "--steps", "2", "--dims", "2"]) == 0
    assert "±" in capsys.readouterr().out


def test_eval_limits_prints_table(capsys):
    assert main(["eval-limits", "--r-min", "0.7", "--r-max", "0.7", "--repeats", "1", "--label", "oracle"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["scenario", "oracle"] and len(lines) == 9


def test_terrain_command(tmp_path, capsys):
    assert main(["terrain", "--out", str(tmp_path), "--steps", "6", "--amplitude", "0.1"]) == 0
    assert (tmp_path / "field.hfld").exists() and (tmp_path / "steps.csv").exists()
    assert "steps achieved 3 / 3" in capsys.readouterr().out


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[rl]\nlearning_rate = 0.1\n")
    assert main(["train", "--config", str(bad)]) == 1
    assert "rl.learning_rate" in capsys.readouterr().err


def test_runtime_errors_exit_2(tmp_path):
    assert main(["heatmap", "--run", str(tmp_path / "missing")]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "stepping_stones", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "eval-limits" in out.stdout


def test_pretrain_then_train_from_it(tmp_path):
    quick = PretrainConfig(demo_episodes=2, dagger_rounds=1, dagger_episodes=2, epochs=2, critic_epochs=2)
    cfg = dataclasses.replace(tiny_config(iterations=1), pretrain=quick)
    cfg_path = tmp_path / "c.toml"
    cfg_path.write_text(cfg.to_toml())
    ckpt = tmp_path / "p0.ckpt"
    assert main(["pretrain", "--config", str(cfg_path), "--out", str(ckpt)]) == 0
    warm = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, init_checkpoint=str(ckpt)))
    cfg_path.write_text(warm.to_toml())
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "run")]) == 0
    first = load_checkpoint(tmp_path / "run" / "checkpoints" / "iter_0000.ckpt")[0]
    assert np.array_equal(first.actor.params, load_checkpoint(ckpt)[0].actor.params)
