import dataclasses

import pytest

from stepping_stones.config import ConfigError, ExperimentConfig, RunConfig, load, loads
from stepping_stones.ppo import RLConfig


def test_defaults_round_trip():
    cfg = ExperimentConfig()
    again = loads(cfg.to_toml())
    assert again == cfg and again.hash() == cfg.hash()


def test_hash_is_stable_and_sensitive():
    assert ExperimentConfig().hash() == ExperimentConfig().hash()
    assert ExperimentConfig().with_seed(1).hash() != ExperimentConfig().hash()
    assert len(ExperimentConfig().hash()) == 16


def test_partial_tables_fill_defaults():
    cfg = loads("[run]\nseed = 7\n[rl]\nlr = 1\n")
    assert cfg.run.seed == 7 and cfg.rl.lr == 1.0 and isinstance(cfg.rl.lr, float)
    assert cfg.curriculum == ExperimentConfig().curriculum
    assert loads("[rewards]\nroll_band = [-0.3, 0.3]\n").rewards.roll_band == (-0.3, 0.3)


@pytest.mark.parametrize("text, needle", [
    ("[run]\nseeed = 1\n", "run.seeed"),
    ("[runn]\nseed = 1\n", "runn"),
    ("[env]\nrewards = 1\n", "env.rewards"),
    ("[run]\nseed = 'x'\n", "run.seed"),
    ("[curriculum]\nstrategy = 'easy'\n", "strategy"),
    ("[run]\ngrid_dims = 4\n", "grid_dims"),
    ("[run\n", "malformed"),
])
def test_errors_name_the_problem(text, needle):
    with pytest.raises(ConfigError, match=needle):
        loads(text)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "nope.toml")
    path = tmp_path / "c.toml"
    path.write_text(ExperimentConfig(rl=RLConfig(critic_lr=1e-3)).to_toml())
    assert load(path).rl.critic_lr == 1e-3


def test_env_config_carries_rewards():
    cfg = loads("[rewards]\nk_target = 10.0\n")
    assert cfg.env_config().rewards.k_target == 10.0


def test_run_validation():
    with pytest.raises(ValueError):
        RunConfig(iterations=-1)
    with pytest.raises(ValueError):
        RunConfig(workers=0)
    assert dataclasses.replace(RunConfig(), iterations=0).iterations == 0


@pytest.mark.parametrize("name", ["desk.toml", "smoke.toml"])
def test_shipped_configs_load(name):
    from pathlib import Path
    cfg = load(Path(__file__).resolve().parents[1] / "configs" / name)
    assert cfg.run.grid_resolution % 2 == 1
    assert loads(cfg.to_toml()) == cfg
