"""Training orchestration, evaluation protocols and run-directory persistence.

Run directory layout::

    config.toml            validated config snapshot (reproduces the run)
    iterations.csv         one row per iteration, fixed header (LOG_FIELDS)
    timing.csv             wall-clock seconds per iteration (not deterministic)
    curriculum/iter_NNNN.npz   sampling distribution, capability, stage
    checkpoints/iter_NNNN.ckpt, checkpoints/final.ckpt
    heatmaps/iter_NNNN.csv|.svg   written by export_heatmaps
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import ExperimentConfig
from .controller import OracleController
from .curriculum import ADAPTIVE, CapabilityGrid, estimate_capability, initial_state, next_distribution, write_heatmap_csv
from .env import N_ACTIONS, EnvConfig, StepperEnv
from .grid import GridDistribution, ParamGrid, grid_2d, grid_3d, grid_5d, make_sampler, stage_mask
from .ppo import Policy, Optimizers, load_checkpoint, ppo_update, save_checkpoint
from .pretrain import behaviour_clone
from .rollout import STREAM_CAPABILITY, STREAM_EVAL, EpisodeStats, RolloutConfig, collect, lane_rng
from .steps import EVAL_RADIUS, StartPose, StepParams, StepSequence, chain, fixed_prefix
from .terrain import HeightField

STREAM_INIT = 3
STREAM_PPO = 4
STREAM_PROBE = 5
STREAM_ROBUST = 6

LOG_FIELDS = (
    "iteration", "samples", "episodes", "mean_return", "median_return", "mean_steps", "success_rate",
    "stage", "dist_max_prob", "dist_entropy", "capability_max", "policy_loss", "value_loss",
    "mean_ratio", "clip_fraction", "eval_return", "eval_steps", "eval_success",
)

#: Controllers map ``(env, observation)`` to an action.
Controller = Callable[[StepperEnv, np.ndarray], np.ndarray]

log = logging.getLogger("stepping_stones")


class TrainingDiverged(RuntimeError):
    pass


def make_grid(dims: int, resolution: int = 11) -> ParamGrid:
    return {2: grid_2d, 3: grid_3d, 5: grid_5d}[dims](resolution=resolution)


def policy_controller(policy: Policy) -> Controller:
    return lambda env, obs: policy.mean_action(obs[None])[0]


def oracle_controller() -> Controller:
    oracle = OracleController()
    return lambda env, obs: oracle(env)


def falling_controller() -> Controller:
    """Leans forward hard and never steps: fails within a few ticks."""
    return lambda env, obs: np.array([0.0, 0.0, 0.0, 1.0, 0.0])


def eval_env_config(env_cfg: EnvConfig, radius: float = EVAL_RADIUS, jitter: float = 0.01,
                    max_ticks: Optional[int] = None) -> EnvConfig:
    return dataclasses.replace(env_cfg, radius=radius, reset_jitter=jitter,
                               max_ticks=max_ticks or env_cfg.max_ticks)


def run_episode(controller: Controller, env: StepperEnv, sampler, rng: np.random.Generator,
                horizon: Optional[int] = None, seq: Optional[StepSequence] = None) -> EpisodeStats:
    obs = env.reset(sampler, rng, horizon=horizon, seq=seq)
    ret, hits = 0.0, 0
    while True:
        out = env.step(controller(env, obs))
        ret += out.reward
        hits += int(out.target_hit)
        obs = out.obs
        if out.done:
            return EpisodeStats(ret, env.state.tick, env.state.steps_achieved, out.reason, hits)


def evaluate(controller: Controller, env_cfg: EnvConfig, dist: GridDistribution, episodes: int,
             seed: int, iteration: int = 0, horizon: Optional[int] = None) -> dict:
    """Mean return, steps and success over ``episodes`` seeded episodes."""
    env = StepperEnv(env_cfg)
    sampler = make_sampler(dist)
    stats = [run_episode(controller, env, sampler, lane_rng(seed, STREAM_EVAL, iteration, e), horizon)
             for e in range(episodes)]
    return {
        "mean_return": float(np.mean([s.ret for s in stats])),
        "mean_steps": float(np.mean([s.steps for s in stats])),
        "success_rate": float(np.mean([s.success for s in stats])),
        "episodes": stats,
    }


def stage_success(controller: Controller, env_cfg: EnvConfig, grid: ParamGrid, stage: int,
                  episodes: int = 20, steps: int = 10, seed: int = 0, ticks_per_step: int = 80) -> float:
    """Success rate of ``steps``-step episodes sampled uniformly from a stage window."""
    cfg = eval_env_config(env_cfg, max_ticks=ticks_per_step * (steps + 3))
    dist = GridDistribution.uniform(grid, stage_mask(grid, stage))
    return evaluate(controller, cfg, dist, episodes, seed, horizon=steps + 3)["success_rate"]


# -- training ------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _entropy(p: np.ndarray) -> float:
    q = p[p > 0]
    return float(-(q * np.log(q)).sum())


@dataclass
class TrainResult:
    policy: Policy
    rows: list
    run_dir: Optional[Path]
    diverged: bool = False
    final_stage: int = 1


def new_policy(cfg: ExperimentConfig) -> Policy:
    return Policy.create(cfg.env.obs_dim, N_ACTIONS, cfg.rl, lane_rng(cfg.run.seed, STREAM_INIT, 0, 0))


def phase0(cfg: ExperimentConfig, ppo_iterations: int = 0, run_dir=None) -> Policy:
    """Flat, straight-line warm start: imitation on stage-1 stones, then PPO on stage 1."""
    policy = new_policy(cfg)
    behaviour_clone(policy, cfg.env_config(), make_grid(cfg.run.grid_dims, cfg.run.grid_resolution), cfg.pretrain, cfg.run.seed,
                    cfg.rl.gamma)
    if ppo_iterations > 0:
        stage1 = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, iterations=ppo_iterations),
                                     curriculum=dataclasses.replace(cfg.curriculum, strategy="fixed_order",
                                                                    reward_threshold=math.inf))
        policy = train(stage1, run_dir, policy).policy
    return policy


def _load_init(cfg: ExperimentConfig) -> Policy:
    policy, _ = load_checkpoint(cfg.run.init_checkpoint)
    if policy.actor.spec.input_dim != cfg.env.obs_dim or policy.actor.spec.output_dim != N_ACTIONS:
        raise ValueError("init checkpoint does not fit the configured environment")
    return policy


def train(cfg: ExperimentConfig, run_dir=None, policy: Optional[Policy] = None,
          on_iteration: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Curriculum -> rollouts -> PPO update -> log, for ``cfg.run.iterations`` iterations.

    ``policy`` (copied, never mutated) or ``cfg.run.init_checkpoint`` seed the
    networks; otherwise they are freshly initialized from the seed.
    """
    run = cfg.run
    seed = run.seed
    grid = make_grid(run.grid_dims, run.grid_resolution)
    env_cfg = cfg.env_config()
    eval_cfg = eval_env_config(env_cfg)
    rc = RolloutConfig(lanes=run.lanes, block=run.block, workers=run.workers)
    if policy is not None:
        policy = policy.copy()
    elif run.init_checkpoint:
        policy = _load_init(cfg)
    else:
        policy = new_policy(cfg)
    opt = Optimizers.for_policy(policy)
    state = initial_state(cfg.curriculum, grid)
    chash = cfg.hash()
    if cfg.rl.samples_per_iteration // run.lanes < env_cfg.max_ticks:
        # lanes restart every iteration, so an episode longer than a lane is never counted
        log.warning("%d ticks per lane is shorter than an episode (%d); only failed episodes "
                    "reach mean_return", cfg.rl.samples_per_iteration // run.lanes, env_cfg.max_ticks)

    out = Path(run_dir) if run_dir is not None else None
    log_fh = time_fh = None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        (out / "curriculum").mkdir(exist_ok=True)
        (out / "config.toml").write_text(cfg.to_toml())
        log_fh = open(out / "iterations.csv", "w", newline="")
        time_fh = open(out / "timing.csv", "w", newline="")
        log_fh.write(",".join(LOG_FIELDS) + "\n")
        time_fh.write("iteration,wall_seconds\n")
        save_checkpoint(out / "checkpoints" / "iter_0000.ckpt", policy,
                        {"config_hash": chash, "iteration": 0, "seed": seed, "stage": state.stage})

    rows = []
    last_mean = None
    diverged = False
    try:
        for it in range(run.iterations):
            t0 = time.perf_counter()
            stats = {"mean_return": last_mean}
            if cfg.curriculum.strategy in ADAPTIVE:
                stats["capability"] = estimate_capability(
                    lambda o: policy.mean_action(o[None])[0], policy.value, StepperEnv(env_cfg), grid,
                    cfg.curriculum, lane_rng(seed, STREAM_CAPABILITY, it, 0))
            state = next_distribution(cfg.curriculum, state, grid, stats)
            if out is not None:
                cap = state.capability.values if state.capability is not None else np.full(grid.shape, np.nan)
                np.savez(out / "curriculum" / f"iter_{it:04d}.npz", probs=state.current_dist.probs,
                         capability=cap, stage=state.stage, dims=run.grid_dims,
                         resolution=run.grid_resolution)

            ro = collect(policy, env_cfg, state.current_dist, cfg.rl, rc, seed, it)
            opt, ustats = ppo_update(policy, ro.batch, cfg.rl, lane_rng(seed, STREAM_PPO, it, 0), opt)
            if ustats["aborted"]:
                diverged = True
            else:
                policy.update_norm(ro.raw_obs)

            rets = [e.ret for e in ro.episodes]
            last_mean = float(np.mean(rets)) if rets else None
            row = {
                "iteration": it,
                "samples": ro.samples,
                "episodes": len(ro.episodes),
                "mean_return": last_mean,
                "median_return": float(np.median(rets)) if rets else None,
                "mean_steps": float(np.mean([e.steps for e in ro.episodes])) if rets else None,
                "success_rate": float(np.mean([e.reason in ("complete", "timeout") for e in ro.episodes]))
                if rets else None,
                "stage": state.stage,
                "dist_max_prob": float(state.current_dist.probs.max()),
                "dist_entropy": _entropy(state.current_dist.probs),
                "capability_max": state.capability.c_max if state.capability is not None else None,
            }
            for k in ("policy_loss", "value_loss", "mean_ratio", "clip_fraction"):
                row[k] = ustats.get(k)
            if (it + 1) % run.eval_every == 0 or it == run.iterations - 1:
                ev = evaluate(policy_controller(policy), eval_cfg, GridDistribution.uniform(grid),
                              run.eval_episodes, seed, it)
                row.update(eval_return=ev["mean_return"], eval_steps=ev["mean_steps"],
                           eval_success=ev["success_rate"])
            else:
                row.update(eval_return=None, eval_steps=None, eval_success=None)
            rows.append(row)
            if on_iteration is not None:
                on_iteration(row)
            if out is not None:
                log_fh.write(",".join(_fmt(row[k]) for k in LOG_FIELDS) + "\n")
                log_fh.flush()
                time_fh.write(f"{it},{time.perf_counter() - t0:.3f}\n")
                time_fh.flush()
                meta = {"config_hash": chash, "iteration": it + 1, "seed": seed, "stage": state.stage}
                if (it + 1) % run.checkpoint_every == 0:
                    save_checkpoint(out / "checkpoints" / f"iter_{it + 1:04d}.ckpt", policy, meta)
            if diverged:
                break
    finally:
        if log_fh is not None:
            log_fh.close()
            time_fh.close()
    if out is not None:
        save_checkpoint(out / "checkpoints" / "final.ckpt", policy,
                        {"config_hash": chash, "iteration": len(rows), "seed": seed, "stage": state.stage,
                         "diverged": diverged})
    return TrainResult(policy, rows, out, diverged, state.stage)


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- capability limits ---------------------------------------------------------

SCENARIOS = {
    "flat_psi0": ("flat", 0.0, 0.0),
    "flat_psi20": ("flat", 20.0, 0.0),
    "single_up": ("single", 0.0, 50.0),
    "single_down": ("single", 0.0, -50.0),
    "continuous_up": ("continuous", 0.0, 50.0),
    "continuous_down": ("continuous", 0.0, -50.0),
    "spiral_up": ("continuous", 20.0, 30.0),
    "spiral_down": ("continuous", 20.0, -30.0),
}


def scenario_sequence(scenario: str, r: float, steps: int = 10, nominal_r: float = 0.725,
                      radius: float = EVAL_RADIUS) -> StepSequence:
    """Fixed opening plus ``steps`` stones of length ``r`` for a probe scenario.

    ``single`` inclines only the first variable stone; ``flat`` and
    ``continuous`` repeat the same parameters for every stone.
    """
    kind, psi, theta = SCENARIOS[scenario]
    psi, theta = math.radians(psi), math.radians(theta)
    params = []
    for k in range(steps):
        th = theta if (kind != "single" or k == 0) else 0.0
        params.append(StepParams(r, psi, th))
    prefix = fixed_prefix(StartPose(), nominal_r, radius)
    stones = tuple(chain(prefix[-1], params, limits=None)[1:])
    return StepSequence(steps=prefix + stones, target_index=2, horizon=len(prefix) + steps)


@dataclass
class ProbeResult:
    scenario: str
    all_pass: Optional[float]
    any_pass: Optional[float]
    successes: dict = field(default_factory=dict)

    def cell(self) -> str:
        f = lambda v: "---" if v is None else f"{v:.2f}"
        return f"{f(self.all_pass)}, {f(self.any_pass)}"


def capability_limit_probe(controller: Controller, scenario: str, r_grid, env_cfg: EnvConfig = EnvConfig(),
                           repeats: int = 5, steps: int = 10, jitter: float = 0.01, seed: int = 0,
                           ticks_per_step: int = 80) -> ProbeResult:
    """Largest ``r`` passed by all repeats and by at least one (``None`` = dash)."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    cfg = eval_env_config(env_cfg, jitter=jitter, max_ticks=ticks_per_step * (steps + 3))
    env = StepperEnv(cfg)
    successes = {}
    for i, r in enumerate(r_grid):
        r = round(float(r), 6)
        seq = scenario_sequence(scenario, r, steps, cfg.nominal_r, cfg.radius)
        wins = 0
        for rep in range(repeats):
            stats = run_episode(controller, env, None, lane_rng(seed, STREAM_PROBE, i, rep), seq=seq)
            wins += stats.success
        successes[r] = wins
    all_pass = [r for r, w in successes.items() if w == repeats]
    any_pass = [r for r, w in successes.items() if w > 0]
    return ProbeResult(scenario, max(all_pass) if all_pass else None, max(any_pass) if any_pass else None,
                       successes)


def probe_table(results: dict) -> str:
    """Rows ``scenario: all-pass, any-pass`` per policy column."""
    names = list(results)
    lines = ["scenario".ljust(18) + "".join(n.ljust(14) for n in names)]
    for sc in SCENARIOS:
        cells = [results[n][sc].cell() if sc in results[n] else "" for n in names]
        lines.append(sc.ljust(18) + "".join(c.ljust(14) for c in cells))
    return "\n".join(lines)


# -- 5D robustness -------------------------------------------------------------

@dataclass
class RobustnessResult:
    counts: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.counts))

    @property
    def std(self) -> float:
        return float(np.std(self.counts))

    def __str__(self) -> str:
        return f"{self.mean:.1f} ± {self.std:.1f}"


def robustness_eval(controller: Controller, env_cfg: EnvConfig = EnvConfig(), n_sequences: int = 10,
                    steps_per_sequence: int = 50, dims: int = 5, seed: int = 0,
                    ticks_per_step: int = 80) -> RobustnessResult:
    """Variable stones passed before failing, on uniformly sampled sequences."""
    grid = make_grid(dims)
    horizon = steps_per_sequence + 3
    cfg = eval_env_config(env_cfg, jitter=0.0, max_ticks=ticks_per_step * horizon)
    env = StepperEnv(cfg)
    sampler = make_sampler(GridDistribution.uniform(grid))
    counts = [run_episode(controller, env, sampler, lane_rng(seed, STREAM_ROBUST, 0, i), horizon=horizon).steps
              for i in range(n_sequences)]
    return RobustnessResult(counts)


# -- heatmaps ------------------------------------------------------------------

def _psi_theta_view(grid: ParamGrid, probs: np.ndarray, cap: np.ndarray):
    """Marginal probability and mean capability over (psi, theta)."""
    keep = [grid.names.index(n) for n in ("psi", "theta")]
    other = tuple(i for i in range(grid.dims) if i not in keep)
    if not other:
        return probs, cap
    p = probs.sum(axis=other)
    if np.all(np.isnan(cap)):
        return p, np.full(p.shape, np.nan)
    return p, np.nanmean(cap, axis=other)


def render_heatmap_svg(path, grid: ParamGrid, probs: np.ndarray, cap: np.ndarray, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    p, c = _psi_theta_view(grid, probs, cap)
    ext = [grid.bounds["theta"][0], grid.bounds["theta"][1], grid.bounds["psi"][0], grid.bounds["psi"][1]]
    ext = [math.degrees(v) for v in ext]
    panels = [("sampling probability", p)]
    if not np.all(np.isnan(c)):
        panels.insert(0, ("capability", c))
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.6), squeeze=False)
    for ax, (name, data) in zip(axes[0], panels):
        im = ax.imshow(data, origin="lower", extent=ext, aspect="auto", cmap="viridis")
        ax.set_xlabel("theta (deg)")
        ax.set_ylabel("psi (deg)")
        ax.set_title(name)
        fig.colorbar(im, ax=ax)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def export_heatmaps(run_dir, images: bool = True) -> list[Path]:
    """Write ``heatmaps/iter_NNNN.csv`` (and ``.svg``) for every logged iteration."""
    run_dir = Path(run_dir)
    src = sorted((run_dir / "curriculum").glob("iter_*.npz"))
    if not src:
        raise FileNotFoundError(f"no curriculum snapshots under {run_dir}")
    dst = run_dir / "heatmaps"
    dst.mkdir(exist_ok=True)
    written = []
    for f in src:
        with np.load(f) as z:
            res = int(z["resolution"]) if "resolution" in z else 11
            grid = make_grid(int(z["dims"]), res)
            probs, cap = z["probs"], z["capability"]
            stage = int(z["stage"])
        dist = GridDistribution(grid, probs)
        capgrid = None if np.all(np.isnan(cap)) else CapabilityGrid(grid, cap)
        csv_path = dst / (f.stem + ".csv")
        with open(csv_path, "w", newline="") as fh:
            write_heatmap_csv(dist, fh, capgrid)
        written.append(csv_path)
        if images:
            svg = dst / (f.stem + ".svg")
            render_heatmap_svg(svg, grid, probs, cap, f"{f.stem} (stage {stage})")
            written.append(svg)
    return written


# -- continuous terrain --------------------------------------------------------

def terrain_walk(controller: Controller, field_: HeightField, seq: StepSequence,
                 env_cfg: EnvConfig = EnvConfig(), ticks_per_step: int = 80) -> EpisodeStats:
    """Walk a projected footstep sequence with the height field underneath."""
    cfg = eval_env_config(env_cfg, radius=seq.steps[0].radius, jitter=0.0,
                          max_ticks=ticks_per_step * len(seq.steps))
    env = StepperEnv(cfg, field_)
    return run_episode(controller, env, None, np.random.default_rng(0), seq=seq)
