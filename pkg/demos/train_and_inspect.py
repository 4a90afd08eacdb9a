"""Warm-start, train one run, then export heatmaps and evaluate the final policy.

    python demos/train_and_inspect.py configs/smoke.toml runs/demo

With no arguments it uses configs/smoke.toml and writes to runs/demo.
"""
import logging
import sys
from pathlib import Path

from stepping_stones import harness
from stepping_stones.config import load


def main(config="configs/smoke.toml", out="runs/demo"):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = load(config)
    start = harness.phase0(cfg)
    res = harness.train(cfg, out, start, on_iteration=lambda row: print(
        f"iter {row['iteration']:4d}  return {row['mean_return']:7.1f}  stage {row['stage']}"))
    written = harness.export_heatmaps(out)
    print(f"{len(written)} heatmap files under {Path(out) / 'heatmaps'}")

    ctrl = harness.policy_controller(res.policy)
    grid = harness.make_grid(cfg.run.grid_dims, cfg.run.grid_resolution)
    for stage in (1, 2, 3):
        rate = harness.stage_success(ctrl, cfg.env_config(), grid, stage, episodes=10)
        print(f"stage {stage} greedy success: {rate:.2f}")
    print(f"robustness: {harness.robustness_eval(ctrl, cfg.env_config(), 5, 20, cfg.run.grid_dims)}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
