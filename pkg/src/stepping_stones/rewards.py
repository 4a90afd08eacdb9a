"""Per-tick reward terms.

All functions are pure. Boundary conventions: the joint-limit band and the
posture bands are closed intervals (a value exactly on the edge is not
penalized), the alive height test is inclusive and the speed cap only
penalizes strict excess.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


REWARD_TERMS = ("target", "progress", "energy", "limit", "posture", "speed", "alive")


@dataclass(frozen=True)
class RewardConfig:
    k_target: float = 50.0
    k_d: float = 0.25
    dt: float = 1.0 / 30.0
    speed_cap: float = 1.6
    alive_bonus: float = 2.0
    min_root_height: float = 0.7
    energy_coeffs: tuple[float, float] = (4.5, 0.225)
    limit_coeff: float = 0.1
    limit_fraction: float = 0.99
    roll_band: tuple[float, float] = (-0.4, 0.4)
    pitch_band: tuple[float, float] = (-0.2, 0.4)

    def __post_init__(self):
        if self.k_target <= 0 or self.k_d <= 0 or self.dt <= 0:
            raise ValueError("k_target, k_d and dt must be positive")


DEFAULT_REWARDS = RewardConfig()


def target_reward(d: float, contacted: bool, cfg: RewardConfig = DEFAULT_REWARDS) -> float:
    if d < 0:
        raise ValueError("distance must be non-negative")
    if not contacted:
        return 0.0
    return cfg.k_target * math.exp(-d / cfg.k_d)


def progress_reward(d_prev: float, d_cur: float, dt: float) -> float:
    return (d_prev - d_cur) / dt


def energy_penalty(actions, velocities, coeffs=DEFAULT_REWARDS.energy_coeffs) -> float:
    # plain floats: a handful of channels is far cheaper than numpy dispatch
    a = [float(x) for x in actions]
    v = [float(x) for x in velocities]
    if not a:
        raise ValueError("need at least one channel")
    if len(v) != len(a):
        raise ValueError("actions and velocities differ in length")
    power, effort = coeffs
    n = len(a)
    return -power * math.fsum(abs(x * y) for x, y in zip(a, v)) / n - effort * math.fsum(x * x for x in a) / n


def _per_channel(bound, n):
    try:
        return [float(bound)] * n
    except TypeError:
        out = [float(b) for b in bound]
    if len(out) != n:
        raise ValueError("limit arrays must match the channel count")
    return out


def limit_penalty(channels, limits, coeff: float = 0.1, fraction: float = 0.99) -> float:
    """``-coeff`` per channel outside its range shrunk about the range center.

    ``limits`` is a ``(lower, upper)`` pair of scalars or per-channel arrays.
    """
    x = [float(c) for c in channels]
    lo, hi = (_per_channel(b, len(x)) for b in limits)
    outside = 0
    for xi, l, u in zip(x, lo, hi):
        mid, half = 0.5 * (l + u), 0.5 * (u - l) * fraction
        if xi < mid - half or xi > mid + half:
            outside += 1
    return -coeff * outside


def posture_penalty(alpha_x: float, alpha_y: float, cfg: RewardConfig = DEFAULT_REWARDS) -> float:
    out = 0.0
    lo, hi = cfg.roll_band
    if not lo <= alpha_x <= hi:
        out -= abs(alpha_x)
    lo, hi = cfg.pitch_band
    if not lo <= alpha_y <= hi:
        out -= abs(alpha_y)
    return out


def speed_penalty(root_speed: float, cap: float = DEFAULT_REWARDS.speed_cap) -> float:
    return -max(root_speed - cap, 0.0)


def alive_check(root_height_above_lower_foot: float,
                cfg: RewardConfig = DEFAULT_REWARDS) -> tuple[float, bool]:
    """Return ``(bonus, terminate)``."""
    if root_height_above_lower_foot >= cfg.min_root_height:
        return cfg.alive_bonus, False
    return 0.0, True


def total_reward(terms: dict) -> float:
    return float(sum(terms[k] for k in REWARD_TERMS))
