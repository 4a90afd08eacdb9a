"""Experiment configuration: a TOML file with one table per component.

Unknown tables or keys are rejected with the offending name so typos never
silently fall back to defaults. The canonical TOML dump of a validated config
is hashed and recorded with every run output.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli_w

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .curriculum import CurriculumConfig
from .env import EnvConfig
from .pretrain import PretrainConfig
from .ppo import RLConfig
from .rewards import RewardConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    iterations: int = 300
    grid_dims: int = 2
    grid_resolution: int = 11
    eval_every: int = 10
    eval_episodes: int = 16
    checkpoint_every: int = 20
    lanes: int = 8
    block: int = 8
    workers: int = 1
    init_checkpoint: str = ""

    def __post_init__(self):
        if self.grid_dims not in (2, 3, 5):
            raise ValueError("grid_dims must be 2, 3 or 5")
        if self.grid_resolution < 3 or self.grid_resolution % 2 == 0:
            raise ValueError("grid_resolution must be odd and >= 3")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if min(self.eval_every, self.eval_episodes, self.checkpoint_every, self.lanes, self.block,
               self.workers) < 1:
            raise ValueError("cadences, lanes, block and workers must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig = field(default_factory=RunConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)

    def env_config(self) -> EnvConfig:
        return dataclasses.replace(self.env, rewards=self.rewards)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, seed=seed))

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            section = getattr(self, f.name)
            out[f.name] = {k: _plain(v) for k, v in dataclasses.asdict(section).items()
                           if not (f.name == "env" and k == "rewards")}
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(_drop_none(self.to_dict()))

    def hash(self) -> str:
        return hashlib.sha256(self.to_toml().encode()).hexdigest()[:16]


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _drop_none(d: dict) -> dict:
    return {k: (_drop_none(v) if isinstance(v, dict) else v) for k, v in d.items() if v is not None}


_SECTIONS = {
    "run": RunConfig,
    "env": EnvConfig,
    "rewards": RewardConfig,
    "rl": RLConfig,
    "curriculum": CurriculumConfig,
    "pretrain": PretrainConfig,
}


def _build(cls, table: dict, section: str):
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    kwargs = {}
    for key, value in table.items():
        if key not in fields or (section == "env" and key == "rewards"):
            raise ConfigError(f"unknown key {section}.{key}")
        default = getattr(cls(), key)
        if isinstance(default, tuple):
            value = tuple(value)
        elif isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        elif default is not None and type(value) is not type(default):
            raise ConfigError(f"{section}.{key} should be {type(default).__name__}, got {type(value).__name__}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    for name, table in data.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section {name}")
        if not isinstance(table, dict):
            raise ConfigError(f"section {name} must be a table")
    parts = {name: _build(cls, data.get(name, {}), name) for name, cls in _SECTIONS.items()}
    return ExperimentConfig(**parts)


def loads(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    return from_dict(data)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)
