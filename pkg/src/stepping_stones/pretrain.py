"""Phase-0 warm start: imitate the scripted controller on easy, straight stones.

The actor is fit to the oracle's actions by mean squared error, with DAgger
rounds in which the current policy drives (mixed with the oracle) and the
oracle only labels. The critic is then regressed on discounted returns of the
last policy-driven episodes so PPO starts from a sensible baseline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import OracleController
from .env import EnvConfig, StepperEnv
from .grid import GridDistribution, ParamGrid, make_sampler, stage_mask
from .ppo import AdamState, Policy, adam_step, compute_returns

STREAM_PRETRAIN = 7


@dataclass(frozen=True)
class PretrainConfig:
    demo_episodes: int = 60
    dagger_rounds: int = 6
    dagger_episodes: int = 30
    expert_mix: float = 0.3
    epochs: int = 40
    lr: float = 1e-3
    minibatch: int = 256
    critic_epochs: int = 40
    target_clip: float = 0.97

    def __post_init__(self):
        if min(self.demo_episodes, self.epochs, self.minibatch, self.critic_epochs) < 1:
            raise ValueError("demo_episodes, epochs, minibatch and critic_epochs must be >= 1")
        if self.dagger_rounds < 0 or self.dagger_episodes < 0:
            raise ValueError("dagger_rounds and dagger_episodes must be >= 0")
        if not 0.0 <= self.expert_mix <= 1.0:
            raise ValueError("expert_mix must lie in [0, 1]")


def _gather(policy, env, sampler, oracle, episodes, expert_mix, rng, gamma):
    obs_l, act_l, ret_l = [], [], []
    for _ in range(episodes):
        obs = env.reset(sampler, rng)
        rewards = []
        while True:
            label = oracle(env)
            obs_l.append(obs)
            act_l.append(label)
            if rng.random() < expert_mix:
                a = label
            else:
                a = policy.act(obs[None], rng)[0][0]
            out = env.step(a)
            rewards.append(out.reward)
            obs = out.obs
            if out.done:
                break
        boot = 0.0 if not out.truncated else float(policy.value(obs[None])[0])
        ret_l.append(compute_returns(rewards, gamma, boot))
    return np.array(obs_l), np.array(act_l), np.concatenate(ret_l)


def _fit(net, x, y, epochs, lr, minibatch, rng, out_fn=None):
    state = AdamState.zeros(net.spec.n_params)
    n = len(x)
    loss = 0.0
    for _ in range(epochs):
        order = rng.permutation(n)
        loss = 0.0
        for s in range(0, n, minibatch):
            idx = order[s:s + minibatch]
            pred, cache = net.forward(x[idx], keep=True)
            err = pred - y[idx]
            loss += float(np.sum(err * err))
            params, state = adam_step(state, net.params, net.backward(cache, 2.0 * err / len(idx)), lr)
            net.set_params(params)
    return loss / n


def behaviour_clone(policy: Policy, env_cfg: EnvConfig, grid: ParamGrid, cfg: PretrainConfig,
                    seed: int, gamma: float = 0.99) -> dict:
    """Fit ``policy`` in place on stage-1 stones; returns fit diagnostics."""
    rng = np.random.default_rng([seed, STREAM_PRETRAIN])
    env = StepperEnv(env_cfg)
    sampler = make_sampler(GridDistribution.uniform(grid, stage_mask(grid, 1)))
    oracle = OracleController()
    obs, acts, rets = _gather(policy, env, sampler, oracle, cfg.demo_episodes, 1.0, rng, gamma)
    if policy.norm is not None:
        policy.norm.update(obs)
    actor_loss = 0.0
    for rnd in range(cfg.dagger_rounds + 1):
        targets = np.clip(acts, -cfg.target_clip, cfg.target_clip)
        actor_loss = _fit(policy.actor, policy.prepare(obs), targets, cfg.epochs, cfg.lr, cfg.minibatch, rng)
        if rnd == cfg.dagger_rounds:
            break
        o2, a2, r2 = _gather(policy, env, sampler, oracle, cfg.dagger_episodes, cfg.expert_mix, rng, gamma)
        obs, acts = np.concatenate([obs, o2]), np.concatenate([acts, a2])
        rets = r2
        last_obs = o2
    if cfg.dagger_rounds == 0:
        last_obs = obs
    critic_loss = _fit(policy.critic, policy.prepare(last_obs), rets[:, None], cfg.critic_epochs, cfg.lr,
                       cfg.minibatch, rng)
    return {"actor_loss": actor_loss, "critic_loss": critic_loss, "samples": len(obs)}
