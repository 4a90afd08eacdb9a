"""Experience collection in fixed lanes.

A rollout is split into ``lanes`` independent lanes, each owning an
environment and a random stream derived from ``(seed, iteration, lane)``.
Lanes are stepped in lockstep blocks so the networks see small batches, and
blocks are the unit of work handed to worker processes. Results are merged in
lane order, so the outcome never depends on the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .env import EnvConfig, StepperEnv
from .grid import GridDistribution, make_sampler
from .ppo import Batch, Policy, RLConfig, Trajectory, gaussian_logprob

STREAM_ROLLOUT = 0
STREAM_EVAL = 1
STREAM_CAPABILITY = 2


def lane_rng(seed: int, stream: int, iteration: int, lane: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, iteration, lane])


@dataclass
class EpisodeStats:
    ret: float
    length: int
    steps: int
    reason: str
    target_hits: int

    @property
    def success(self) -> bool:
        return self.reason == "complete"


@dataclass
class LaneResult:
    trajectories: list = field(default_factory=list)
    episodes: list = field(default_factory=list)
    raw_obs: list = field(default_factory=list)


def _run_block(policy: Policy, env_cfg: EnvConfig, dist: GridDistribution, ticks: int,
               seed: int, iteration: int, lanes: range, horizon: Optional[int]):
    rngs = [lane_rng(seed, STREAM_ROLLOUT, iteration, lane) for lane in lanes]
    sampler = make_sampler(dist)
    envs = [StepperEnv(env_cfg) for _ in lanes]
    obs = np.stack([e.reset(sampler, r, horizon=horizon) for e, r in zip(envs, rngs)])
    n = len(envs)
    std = np.exp(policy.logstd)
    bufs = [dict(obs=[], act=[], next=[], rew=[], logp=[], val=[]) for _ in range(n)]
    ep = [dict(ret=0.0, hits=0) for _ in range(n)]
    results = [LaneResult() for _ in range(n)]

    for t in range(ticks):
        x = policy.prepare(obs)
        mean = policy.actor.forward(x)
        values = policy.critic.forward(x)[:, 0]
        noise = np.stack([r.standard_normal(mean.shape[1]) for r in rngs])
        acts = mean + std * noise
        logps = gaussian_logprob(mean, policy.logstd, acts)
        for i, env in enumerate(envs):
            out = env.step(acts[i])
            b = bufs[i]
            b["obs"].append(x[i])
            b["act"].append(acts[i])
            b["next"].append(out.obs)
            b["rew"].append(out.reward)
            b["logp"].append(logps[i])
            b["val"].append(values[i])
            results[i].raw_obs.append(obs[i])
            ep[i]["ret"] += out.reward
            ep[i]["hits"] += int(out.target_hit)
            last_tick = t == ticks - 1
            if out.done or last_tick:
                terminal = out.done and not out.truncated
                boot = 0.0 if terminal else float(policy.value(out.obs[None])[0])
                results[i].trajectories.append(Trajectory(
                    np.array(b["obs"]), np.array(b["act"]), np.array(b["next"]), np.array(b["rew"]),
                    np.array(b["logp"]), np.array(b["val"]), terminal, boot))
                bufs[i] = dict(obs=[], act=[], next=[], rew=[], logp=[], val=[])
                if out.done:
                    results[i].episodes.append(EpisodeStats(ep[i]["ret"], env.state.tick,
                                                            env.state.steps_achieved, out.reason,
                                                            ep[i]["hits"]))
                    ep[i] = dict(ret=0.0, hits=0)
                    obs[i] = env.reset(sampler, rngs[i], horizon=horizon)
                    continue
            obs[i] = out.obs
    return results


@dataclass(frozen=True)
class RolloutConfig:
    lanes: int = 8
    block: int = 8
    workers: int = 1
    horizon: Optional[int] = None

    def __post_init__(self):
        if min(self.lanes, self.block, self.workers) < 1:
            raise ValueError("lanes, block and workers must be >= 1")


@dataclass
class Rollout:
    batch: Batch
    episodes: list
    raw_obs: np.ndarray
    samples: int


def collect(policy: Policy, env_cfg: EnvConfig, dist: GridDistribution, rl: RLConfig,
            rc: RolloutConfig, seed: int, iteration: int) -> Rollout:
    """Collect ``rl.samples_per_iteration`` ticks (rounded up to whole lanes)."""
    ticks = math.ceil(rl.samples_per_iteration / rc.lanes)
    blocks = [range(s, min(s + rc.block, rc.lanes)) for s in range(0, rc.lanes, rc.block)]
    args = [(policy, env_cfg, dist, ticks, seed, iteration, b, rc.horizon) for b in blocks]
    if rc.workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=min(rc.workers, len(blocks))) as pool:
            parts = list(pool.map(_run_block_star, args))
    else:
        parts = [_run_block(*a) for a in args]
    lanes = [lr for part in parts for lr in part]
    trajs = [t for lr in lanes for t in lr.trajectories]
    episodes = [e for lr in lanes for e in lr.episodes]
    raw = np.array([o for lr in lanes for o in lr.raw_obs])
    batch = Batch(
        obs=np.concatenate([t.obs for t in trajs]),
        actions=np.concatenate([t.actions for t in trajs]),
        logp=np.concatenate([t.logp for t in trajs]),
        values=np.concatenate([t.values for t in trajs]),
        returns=np.concatenate([t.returns(rl.gamma, rl.lam) for t in trajs]),
    )
    return Rollout(batch, episodes, raw, len(batch))


def _run_block_star(args):
    return _run_block(*args)
