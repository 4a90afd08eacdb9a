"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import ConfigError, ExperimentConfig, load
from .ppo import load_checkpoint, save_checkpoint
from .steps import write_steps
from .terrain import perlin_heightfield, project_footsteps

log = logging.getLogger("stepping_stones")


def _config(args) -> ExperimentConfig:
    cfg = load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _controller(args):
    if args.checkpoint:
        policy, _ = load_checkpoint(args.checkpoint)
        return harness.policy_controller(policy)
    return harness.oracle_controller()


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out or f"runs/{cfg.curriculum.strategy}_s{cfg.run.seed}")
    res = harness.train(cfg, out, on_iteration=lambda row: log.info(
        "iter %d  return %s  stage %d", row["iteration"], row["mean_return"], row["stage"]))
    print(f"run directory: {out}  (config {cfg.hash()})")
    return 2 if res.diverged else 0


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    out = Path(args.out or f"runs/phase0_s{cfg.run.seed}.ckpt")
    out.parent.mkdir(parents=True, exist_ok=True)
    policy = harness.phase0(cfg)
    save_checkpoint(out, policy, {"config_hash": cfg.hash(), "seed": cfg.run.seed, "phase": 0})
    print(f"phase-0 checkpoint: {out}")
    return 0


def cmd_eval_limits(args) -> int:
    cfg = _config(args)
    ctrl = _controller(args)
    r_grid = np.round(np.arange(args.r_min, args.r_max + 1e-9, args.r_step), 6)
    results = {sc: harness.capability_limit_probe(ctrl, sc, r_grid, cfg.env_config(), repeats=args.repeats,
                                                  seed=cfg.run.seed)
               for sc in harness.SCENARIOS}
    print(harness.probe_table({args.label: results}))
    return 0


def cmd_eval_robustness(args) -> int:
    cfg = _config(args)
    res = harness.robustness_eval(_controller(args), cfg.env_config(), args.sequences, args.steps, args.dims,
                                  seed=cfg.run.seed)
    print(f"{args.label}: {res}")
    return 0


def cmd_heatmap(args) -> int:
    written = harness.export_heatmaps(args.run, images=not args.no_images)
    print(f"wrote {len(written)} files under {Path(args.run) / 'heatmaps'}")
    return 0


def cmd_terrain(args) -> int:
    cfg = _config(args)
    field = perlin_heightfield(cfg.run.seed, amplitude=args.amplitude)
    seq = project_footsteps(field, (args.start_x, args.start_y), args.steps, args.step_length)
    out = Path(args.out or "terrain")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "field.hfld", "wb") as fh:
        field.write_binary(fh)
    with open(out / "steps.csv", "w", newline="") as fh:
        write_steps(seq.steps, fh)
    stats = harness.terrain_walk(_controller(args), field, seq, cfg.env_config())
    print(f"steps achieved {stats.steps} / {len(seq.steps) - 3}  ({stats.reason})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stepping-stones")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    policy = argparse.ArgumentParser(add_help=False)
    policy.add_argument("--checkpoint", help="policy checkpoint (default: scripted controller)")
    policy.add_argument("--label", default="policy")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common])
    t.set_defaults(fn=cmd_train)

    pre = sub.add_parser("pretrain", parents=[common], help="phase-0 imitation warm start")
    pre.set_defaults(fn=cmd_pretrain)

    lim = sub.add_parser("eval-limits", parents=[common, policy])
    lim.add_argument("--r-min", type=float, default=0.5)
    lim.add_argument("--r-max", type=float, default=1.5)
    lim.add_argument("--r-step", type=float, default=0.1)
    lim.add_argument("--repeats", type=int, default=5)
    lim.set_defaults(fn=cmd_eval_limits)

    rob = sub.add_parser("eval-robustness", parents=[common, policy])
    rob.add_argument("--sequences", type=int, default=10)
    rob.add_argument("--steps", type=int, default=50)
    rob.add_argument("--dims", type=int, choices=(2, 3, 5), default=5)
    rob.set_defaults(fn=cmd_eval_robustness)

    hm = sub.add_parser("heatmap", parents=[common])
    hm.add_argument("--run", required=True, help="run directory")
    hm.add_argument("--no-images", action="store_true")
    hm.set_defaults(fn=cmd_heatmap)

    ter = sub.add_parser("terrain", parents=[common, policy])
    ter.add_argument("--amplitude", type=float, default=0.3)
    ter.add_argument("--steps", type=int, default=30)
    ter.add_argument("--start-x", type=float, default=-4.0)
    ter.add_argument("--start-y", type=float, default=-8.0)
    ter.add_argument("--step-length", type=float, default=0.7)
    ter.set_defaults(fn=cmd_terrain)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - every other failure maps to exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
