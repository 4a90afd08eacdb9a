"""Actor-critic PPO on top of :mod:`stepping_stones.nn`.

Value targets come from the plain backward recursion
``V_t = r_t + gamma * V_{t+1}``, seeded with the old critic's estimate where a
trajectory was cut off rather than terminated. The advantage is the target
minus the old value estimate (no GAE).
"""
from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .nn import MLP, NetworkSpec, actor_spec, critic_spec

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class RLConfig:
    gamma: float = 0.99
    lam: float = 1.0
    clip: float = 0.2
    lr: float = 3e-5
    critic_lr: Optional[float] = None
    minibatch: int = 1024
    epochs: int = 10
    samples_per_iteration: int = 5000
    value_coef: float = 0.5
    max_grad_norm: Optional[float] = None
    normalize_advantages: bool = True
    normalize_obs: bool = True
    logstd: float = -1.5
    width: int = 256
    depth: int = 4

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.clip <= 0 or self.lr <= 0 or self.value_coef < 0 or (self.critic_lr is not None and self.critic_lr <= 0):
            raise ValueError("clip and lr must be positive, value_coef non-negative")
        if min(self.minibatch, self.epochs, self.samples_per_iteration, self.width, self.depth) < 1:
            raise ValueError("minibatch, epochs, samples_per_iteration, width, depth must be >= 1")


def gaussian_logprob(mean, logstd, a) -> np.ndarray:
    """Diagonal Gaussian log-density, summed over the last axis."""
    mean = np.asarray(mean, dtype=float)
    a = np.asarray(a, dtype=float)
    logstd = np.broadcast_to(np.asarray(logstd, dtype=float), mean.shape)
    z = (a - mean) * np.exp(-logstd)
    return np.sum(-0.5 * LOG_2PI - logstd - 0.5 * z * z, axis=-1)


def gaussian_logprob_grad_mean(mean, logstd, a) -> np.ndarray:
    return (np.asarray(a, dtype=float) - mean) * np.exp(-2.0 * np.asarray(logstd, dtype=float))


def compute_returns(rewards, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """Backward recursion ``V_t = r_t + gamma * V_{t+1}`` with ``V_T+1 = bootstrap``.

    ``bootstrap`` is 0 for a terminated trajectory and the old critic's value
    of the next observation for one that was cut off.
    """
    rewards = np.asarray(rewards, dtype=float)
    out = np.empty_like(rewards)
    acc = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def lambda_returns(rewards, values, gamma: float, lam: float, bootstrap: float = 0.0) -> np.ndarray:
    """``G_t = r_t + gamma * ((1 - lam) * V_{t+1} + lam * G_{t+1})``, tail ``bootstrap``.

    ``values[t]`` is the old critic's value of ``o_t``. ``lam = 1`` gives
    :func:`compute_returns`; smaller ``lam`` trades bias for variance.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    out = np.empty_like(rewards)
    acc = nxt = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * ((1.0 - lam) * nxt + lam * acc)
        out[t] = acc
        nxt = values[t]
    return out


@dataclass
class Trajectory:
    """Contiguous experience of one episode (or an episode fragment).

    ``next_obs[t]`` is ``o_{t+1}``; ``terminal`` marks a real episode end,
    otherwise ``bootstrap`` holds the old critic's value of the last ``next_obs``.
    """

    obs: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray
    rewards: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    terminal: bool
    bootstrap: float = 0.0

    def __post_init__(self):
        n = len(self.rewards)
        for name in ("obs", "actions", "next_obs", "logp", "values"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from rewards")
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("rewards must be finite")

    def __len__(self):
        return len(self.rewards)

    def returns(self, gamma: float, lam: float = 1.0) -> np.ndarray:
        boot = 0.0 if self.terminal else self.bootstrap
        if lam == 1.0:
            return compute_returns(self.rewards, gamma, boot)
        return lambda_returns(self.rewards, self.values, gamma, lam, boot)


class RunningNorm:
    """Running mean/variance of observations (parallel-merge update).

    The scale never drops below ``min_std``: a feature that was constant in
    early data (lateral offsets on straight stones) must not be blown up to
    the clip value once it starts to vary.
    """

    def __init__(self, dim: int, clip: float = 10.0, min_std: float = 0.05):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.clip = clip
        self.min_std = min_std

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float).reshape(-1, self.mean.size)
        n = x.shape[0]
        if n == 0:
            return
        bm, bv = x.mean(axis=0), x.var(axis=0)
        tot = self.count + n
        delta = bm - self.mean
        m2 = self.var * self.count + bv * n + delta * delta * self.count * n / tot
        self.mean = self.mean + delta * n / tot
        self.var = m2 / tot
        self.count = tot

    @property
    def scale(self) -> np.ndarray:
        return np.maximum(np.sqrt(self.var), self.min_std)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / self.scale, -self.clip, self.clip)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float):
    """One bias-corrected Adam descent step; returns ``(new_params, new_state)``."""
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    mhat = m / (1.0 - state.beta1**t)
    vhat = v / (1.0 - state.beta2**t)
    new = params - lr * mhat / (np.sqrt(vhat) + state.eps)
    return new, dataclasses.replace(state, m=m, v=v, t=t)


class Policy:
    """Gaussian actor with fixed log-std, a critic and an observation normalizer."""

    def __init__(self, actor: MLP, critic: MLP, logstd, norm: Optional[RunningNorm] = None):
        if critic.spec.output_dim != 1:
            raise ValueError("critic must output a single value")
        if actor.spec.input_dim != critic.spec.input_dim:
            raise ValueError("actor and critic must share the observation width")
        self.actor = actor
        self.critic = critic
        self.logstd = np.broadcast_to(np.asarray(logstd, dtype=float), (actor.spec.output_dim,)).copy()
        self.norm = norm

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, cfg: RLConfig, rng: np.random.Generator) -> "Policy":
        actor = MLP.initialized(actor_spec(obs_dim, act_dim, cfg.width, cfg.depth), rng, output_scale=0.01)
        critic = MLP.initialized(critic_spec(obs_dim, cfg.width, cfg.depth), rng)
        norm = RunningNorm(obs_dim) if cfg.normalize_obs else None
        return cls(actor, critic, cfg.logstd, norm)

    def copy(self) -> "Policy":
        norm = None
        if self.norm is not None:
            norm = RunningNorm(self.norm.mean.size, self.norm.clip, self.norm.min_std)
            norm.mean, norm.var, norm.count = self.norm.mean.copy(), self.norm.var.copy(), self.norm.count
        return Policy(MLP(self.actor.spec, self.actor.params), MLP(self.critic.spec, self.critic.params),
                      self.logstd, norm)

    def update_norm(self, raw_obs: np.ndarray) -> None:
        """Fold new observations into the normalizer without changing either network.

        The first layers are rescaled so every unclipped input maps to the
        same pre-activation as before; otherwise a precise controller would
        drift just because its input statistics moved.
        """
        if self.norm is None:
            return
        m0, s0 = self.norm.mean.copy(), self.norm.scale
        self.norm.update(raw_obs)
        m1, s1 = self.norm.mean, self.norm.scale
        for net in (self.actor, self.critic):
            w, b = net.weights[0], net.biases[0]
            b += ((m1 - m0) / s0) @ w
            w *= (s1 / s0)[:, None]

    def prepare(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        return self.norm(obs) if self.norm is not None else obs

    def mean_action(self, obs) -> np.ndarray:
        return self.actor.forward(self.prepare(obs))

    def value(self, obs) -> np.ndarray:
        return self.critic.forward(self.prepare(obs))[..., 0]

    def act(self, obs, rng: np.random.Generator, deterministic: bool = False):
        """Return ``(actions, logp, values)`` for a batch of raw observations."""
        x = self.prepare(obs)
        mean = self.actor.forward(x)
        if deterministic:
            a = mean
        else:
            a = mean + np.exp(self.logstd) * rng.standard_normal(mean.shape)
        return a, gaussian_logprob(mean, self.logstd, a), self.critic.forward(x)[..., 0]


@dataclass
class Batch:
    """Flat training batch; ``obs`` is already normalized."""

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    returns: np.ndarray

    def __len__(self):
        return len(self.returns)

    def subset(self, idx) -> "Batch":
        return Batch(self.obs[idx], self.actions[idx], self.logp[idx], self.values[idx], self.returns[idx])


def advantages(batch: Batch, normalize: bool = True) -> np.ndarray:
    adv = batch.returns - batch.values
    if normalize and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def ppo_loss(policy: Policy, batch: Batch, adv: np.ndarray, clip: float, value_coef: float):
    """Clipped PPO loss and its gradients.

    Returns ``(loss, actor_grad, critic_grad, stats)``; the loss is
    ``-mean(min(rho*A, clip(rho)*A)) + value_coef * mean((V - target)^2)``.
    """
    n = len(batch)
    mean, acache = policy.actor.forward(batch.obs, keep=True)
    logp = gaussian_logprob(mean, policy.logstd, batch.actions)
    ratio = np.exp(logp - batch.logp)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr = np.minimum(ratio * adv, clipped * adv)
    active = ratio * adv <= clipped * adv
    coef = np.where(active, adv * ratio, 0.0) / n
    g_mean = -coef[:, None] * gaussian_logprob_grad_mean(mean, policy.logstd, batch.actions)
    actor_grad = policy.actor.backward(acache, g_mean)

    v, ccache = policy.critic.forward(batch.obs, keep=True)
    err = v[:, 0] - batch.returns
    critic_grad = policy.critic.backward(ccache, (2.0 * value_coef / n * err)[:, None])

    policy_loss = -float(surr.mean())
    value_loss = float(np.mean(err * err))
    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "mean_ratio": float(ratio.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip)),
    }
    return policy_loss + value_coef * value_loss, actor_grad, critic_grad, stats


def _clip_norm(g: np.ndarray, max_norm: Optional[float]) -> np.ndarray:
    if max_norm is None:
        return g
    norm = float(np.linalg.norm(g))
    return g * (max_norm / norm) if norm > max_norm else g


@dataclass
class Optimizers:
    actor: AdamState
    critic: AdamState

    @classmethod
    def for_policy(cls, policy: Policy) -> "Optimizers":
        return cls(AdamState.zeros(policy.actor.spec.n_params), AdamState.zeros(policy.critic.spec.n_params))


def ppo_update(policy: Policy, batch: Batch, cfg: RLConfig, rng: np.random.Generator,
               opt: Optional[Optimizers] = None):
    """Run ``cfg.epochs`` epochs of minibatch Adam on the clipped objective.

    Updates ``policy`` (and ``opt``) in place and returns ``(opt, stats)``. A
    non-finite loss or gradient restores the parameters and optimizer state
    from before the call and reports ``aborted = 1``.
    """
    opt = opt or Optimizers.for_policy(policy)
    if len(batch) == 0:
        raise ValueError("empty batch")
    saved = (policy.actor.params.copy(), policy.critic.params.copy(), dataclasses.replace(opt.actor),
             dataclasses.replace(opt.critic))
    adv_all = advantages(batch, cfg.normalize_advantages)
    critic_lr = cfg.lr if cfg.critic_lr is None else cfg.critic_lr
    sums: dict = {}
    count = 0
    n = len(batch)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            loss, ga, gc, stats = ppo_loss(policy, batch.subset(idx), adv_all[idx], cfg.clip, cfg.value_coef)
            if not (math.isfinite(loss) and np.all(np.isfinite(ga)) and np.all(np.isfinite(gc))):
                policy.actor.set_params(saved[0])
                policy.critic.set_params(saved[1])
                opt.actor, opt.critic = saved[2], saved[3]
                return opt, {"aborted": 1.0}
            new_a, opt.actor = adam_step(opt.actor, policy.actor.params, _clip_norm(ga, cfg.max_grad_norm), cfg.lr)
            new_c, opt.critic = adam_step(opt.critic, policy.critic.params, _clip_norm(gc, cfg.max_grad_norm), critic_lr)
            policy.actor.set_params(new_a)
            policy.critic.set_params(new_c)
            for k, v in stats.items():
                sums[k] = sums.get(k, 0.0) + v
            count += 1
    out = {k: v / count for k, v in sums.items()}
    out["aborted"] = 0.0
    return opt, out


# -- checkpoints ---------------------------------------------------------------

CKPT_MAGIC = b"SSCKPT"
CKPT_VERSION = 1
_PREFIX = struct.Struct("<6sII")


class CheckpointMismatch(ValueError):
    pass


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save_checkpoint(path, policy: Policy, meta: Optional[dict] = None) -> None:
    """Write magic, version, JSON header length, JSON header, then float64 LE arrays."""
    arrays = [("actor", policy.actor.params), ("critic", policy.critic.params), ("logstd", policy.logstd)]
    if policy.norm is not None:
        arrays += [("norm_mean", policy.norm.mean), ("norm_var", policy.norm.var),
                   ("norm_count", np.array([policy.norm.count]))]
    header = {
        "actor_spec": policy.actor.spec.as_dict(),
        "critic_spec": policy.critic.spec.as_dict(),
        "norm_clip": policy.norm.clip if policy.norm is not None else None,
        "norm_min_std": policy.norm.min_std if policy.norm is not None else None,
        "arrays": [[name, int(a.size)] for name, a in arrays],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(_PREFIX.pack(CKPT_MAGIC, CKPT_VERSION, len(blob)))
    buf.write(blob)
    for _, a in arrays:
        buf.write(np.asarray(a, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path, actor: Optional[NetworkSpec] = None, critic: Optional[NetworkSpec] = None):
    """Return ``(policy, meta)``; specs, if given, must match the file exactly."""
    data = Path(path).read_bytes()
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != CKPT_MAGIC:
        raise ValueError("not a checkpoint file")
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = _PREFIX.size
    header = json.loads(data[off:off + hlen])
    off += hlen
    a_spec = NetworkSpec.from_dict(header["actor_spec"])
    c_spec = NetworkSpec.from_dict(header["critic_spec"])
    if actor is not None and actor != a_spec:
        raise CheckpointMismatch(f"actor network {a_spec} does not match {actor}")
    if critic is not None and critic != c_spec:
        raise CheckpointMismatch(f"critic network {c_spec} does not match {critic}")
    arrays = {}
    for name, size in header["arrays"]:
        arrays[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).astype(float)
        off += 8 * size
    if off != len(data):
        raise ValueError("checkpoint payload size does not match its header")
    norm = None
    if "norm_mean" in arrays:
        norm = RunningNorm(a_spec.input_dim, header["norm_clip"], header.get("norm_min_std", 0.0))
        norm.mean, norm.var, norm.count = arrays["norm_mean"], arrays["norm_var"], float(arrays["norm_count"][0])
    policy = Policy(MLP(a_spec, arrays["actor"]), MLP(c_spec, arrays["critic"]), arrays["logstd"], norm)
    return policy, header["meta"]
