"""Multi-seed experiments: the learning check and the strategy comparison.

Both start every run from a per-seed phase-0 checkpoint (imitation on
stage-1 stones) so strategies differ only in how they schedule harder steps.
Phase-0 checkpoints are cached on disk, keyed by seed and config hash.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig
from .curriculum import STRATEGIES
from .harness import make_grid, phase0, policy_controller, stage_success, train
from .ppo import Policy, load_checkpoint, save_checkpoint

log = logging.getLogger("stepping_stones")

BASELINES = ("uniform", "difficult_favored")
CURRICULA = ("fixed_order", "fixed_order_boundary", "adaptive")


def phase0_checkpoint(cfg: ExperimentConfig, seed: int, cache_dir) -> Policy:
    """Phase-0 policy for ``seed``; loaded from ``cache_dir`` when already built."""
    base = cfg.with_seed(seed)
    key = dataclasses.replace(base, curriculum=type(cfg.curriculum)(), run=dataclasses.replace(
        base.run, iterations=0, workers=1, init_checkpoint="")).hash()
    path = Path(cache_dir) / f"phase0_s{seed}_{key}.ckpt"
    if path.exists():
        return load_checkpoint(path)[0]
    path.parent.mkdir(parents=True, exist_ok=True)
    policy = phase0(base)
    save_checkpoint(path, policy, {"seed": seed, "config_hash": key, "phase": 0})
    return policy


@dataclass
class LearningResult:
    seeds: list
    success: list
    minutes: list
    threshold: float = 0.8

    @property
    def passing(self) -> int:
        return sum(s >= self.threshold for s in self.success)

    def as_dict(self) -> dict:
        return {"seeds": self.seeds, "stage3_success": self.success, "minutes": self.minutes,
                "passing": self.passing}


def learning_check(cfg: ExperimentConfig, seeds: Sequence[int], out_dir, stage: int = 3,
                   episodes: int = 20, steps: int = 10) -> LearningResult:
    """Fixed-order training per seed, then greedy success on ``steps``-stone episodes at ``stage``."""
    out_dir = Path(out_dir)
    cfg = dataclasses.replace(cfg, curriculum=dataclasses.replace(cfg.curriculum, strategy="fixed_order"))
    success, minutes = [], []
    for seed in seeds:
        run_cfg = cfg.with_seed(seed)
        start = phase0_checkpoint(run_cfg, seed, out_dir / "phase0")
        t0 = time.perf_counter()
        res = train(run_cfg, out_dir / f"fixed_order_s{seed}", start)
        minutes.append((time.perf_counter() - t0) / 60.0)
        grid = make_grid(cfg.run.grid_dims, cfg.run.grid_resolution)
        success.append(stage_success(policy_controller(res.policy), run_cfg.env_config(), grid, stage,
                                     episodes=episodes, steps=steps, seed=seed))
        log.info("seed %d: stage-%d success %.2f after %.1f min", seed, stage, success[-1], minutes[-1])
    result = LearningResult(list(seeds), success, minutes)
    (out_dir / "learning.json").write_text(json.dumps(result.as_dict(), indent=2))
    return result


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Standardized mean difference with the pooled sample standard deviation."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    dof = len(a) + len(b) - 2
    pooled = ((len(a) - 1) * a.var(ddof=1) + (len(b) - 1) * b.var(ddof=1)) / dof if dof > 0 else 0.0
    diff = a.mean() - b.mean()
    if pooled <= 0:
        return math.copysign(math.inf, diff) if diff else 0.0
    return float(diff / math.sqrt(pooled))


@dataclass
class ComparisonResult:
    final_returns: dict
    minutes: dict = field(default_factory=dict)

    def mean(self, strategy: str) -> float:
        return float(np.mean(self.final_returns[strategy]))

    def effect_sizes(self) -> dict:
        return {f"{c} vs {b}": cohens_d(self.final_returns[c], self.final_returns[b])
                for c in CURRICULA for b in BASELINES
                if c in self.final_returns and b in self.final_returns}

    def ordering_holds(self) -> bool:
        """Every curriculum's mean final return strictly beats every baseline's."""
        return all(self.mean(c) > self.mean(b) for c in CURRICULA for b in BASELINES)

    def report(self) -> str:
        lines = ["strategy".ljust(22) + "mean final eval return (per seed)"]
        for s, rets in self.final_returns.items():
            lines.append(s.ljust(22) + f"{self.mean(s):9.1f}  " + " ".join(f"{r:.1f}" for r in rets))
        lines.append("effect sizes (Cohen's d):")
        for k, d in self.effect_sizes().items():
            lines.append(f"  {k:40s} {d:+.2f}")
        lines.append(f"ordering holds: {self.ordering_holds()}")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {"final_returns": self.final_returns, "minutes": self.minutes,
                "effect_sizes": self.effect_sizes(), "ordering_holds": self.ordering_holds()}


def compare_strategies(cfg: ExperimentConfig, seeds: Sequence[int], out_dir,
                       strategies: Sequence[str] = CURRICULA + BASELINES) -> ComparisonResult:
    """Train every strategy on every seed under the same iteration budget."""
    out_dir = Path(out_dir)
    finals: dict = {}
    minutes: dict = {}
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        finals[strategy], minutes[strategy] = [], []
        for seed in seeds:
            run_cfg = dataclasses.replace(
                cfg, curriculum=dataclasses.replace(cfg.curriculum, strategy=strategy)).with_seed(seed)
            start = phase0_checkpoint(run_cfg, seed, out_dir / "phase0")
            t0 = time.perf_counter()
            res = train(run_cfg, out_dir / f"{strategy}_s{seed}", start)
            minutes[strategy].append((time.perf_counter() - t0) / 60.0)
            finals[strategy].append(_final_eval(res.rows))
            log.info("%s seed %d: final eval return %.1f", strategy, seed, finals[strategy][-1])
    result = ComparisonResult(finals, minutes)
    (out_dir / "comparison.json").write_text(json.dumps(result.as_dict(), indent=2))
    return result


def _final_eval(rows: list) -> float:
    for row in reversed(rows):
        if row.get("eval_return") is not None:
            return float(row["eval_return"])
    return math.nan

