"""Point-foot stepper: a reduced-order walker for stepping-stone sequences.

The body is a point mass (the root) balanced over a point stance foot like an
inverted pendulum. Five action channels command the swing-foot velocity
(root frame) and a horizontal lean acceleration. The root height tracks a
critically damped spring towards ``rest_height`` above the lower foot.

Failure modes end the episode: landing anywhere other than the target or a
stone already stepped on, the swing foot dropping into the gap between
stones, the stance leg overextending, the root sagging below the alive
height, or a non-finite state.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rewards as R
from .steps import (
    StartPose,
    Step,
    StepSequence,
    init_sequence,
    on_target_contact,
    tick_sequence,
    TRAIN_RADIUS,
)
from .terrain import HeightField

N_ACTIONS = 5
BASE_OBS_DIM = 19
TILT_OBS_DIM = 4


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 1.0 / 30.0
    leg_length: float = 1.2
    rest_height: float = 0.95
    swing_speed: float = 3.0
    lean_accel: float = 5.0
    k_h: float = 100.0
    d_h: float = 20.0
    gravity: float = 9.8
    max_ticks: int = 300
    look_ahead_delay: int = 2
    lean_angle_scale: float = 0.5
    void_margin: float = 0.3
    tilt_push: float = 0.5
    observe_tilt: bool = False
    reset_jitter: float = 0.0
    nominal_r: float = 0.725
    radius: float = TRAIN_RADIUS
    rewards: R.RewardConfig = field(default_factory=R.RewardConfig)

    def __post_init__(self):
        for name in ("dt", "leg_length", "rest_height", "swing_speed", "lean_accel",
                     "k_h", "d_h", "gravity", "radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_ticks < 1 or self.look_ahead_delay < 0:
            raise ValueError("max_ticks must be >= 1 and look_ahead_delay >= 0")

    @property
    def obs_dim(self) -> int:
        return BASE_OBS_DIM + (TILT_OBS_DIM if self.observe_tilt else 0)


@dataclass(frozen=True)
class EnvState:
    root: tuple[float, float, float]
    root_vel: tuple[float, float, float]
    stance: tuple[float, float, float]
    swing: tuple[float, float, float]
    yaw: float
    tick: int = 0
    stance_foot: int = 0
    stance_step: int = 1
    swing_grounded: bool = True
    lean: tuple[float, float] = (0.0, 0.0)
    stance_slope: tuple[float, float] = (0.0, 0.0)
    swing_base: float = 0.0
    steps_achieved: int = 0

    @property
    def lower_foot_z(self) -> float:
        return min(self.stance[2], self.swing[2])

    @property
    def root_height(self) -> float:
        return self.root[2] - self.lower_foot_z

    @property
    def contacts(self) -> tuple[float, float]:
        flags = [0.0, 0.0]
        flags[self.stance_foot] = 1.0
        flags[1 - self.stance_foot] = 1.0 if self.swing_grounded else 0.0
        return flags[0], flags[1]

    def physical(self) -> np.ndarray:
        return np.array(self.root + self.root_vel + self.stance + self.swing + (self.yaw,))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.physical())))


@dataclass
class StepOutcome:
    state: EnvState
    seq: StepSequence
    obs: np.ndarray
    terms: dict
    done: bool
    reason: str = ""
    target_hit: bool = False

    @property
    def reward(self) -> float:
        return R.total_reward(self.terms)

    @property
    def success(self) -> bool:
        return self.reason == "complete"

    @property
    def truncated(self) -> bool:
        return self.reason == "timeout"


def _slope_of(step: Step) -> tuple[float, float]:
    if step.surface_roll == 0.0 and step.surface_pitch == 0.0:
        return 0.0, 0.0
    n = step.normal()
    return float(n[0] / n[2]), float(n[1] / n[2])


def reset(seq: StepSequence, cfg: EnvConfig = EnvConfig(),
          rng: Optional[np.random.Generator] = None) -> EnvState:
    """Stand on the two opening stones with the root at rest over the front foot."""
    rear, front = seq.steps[0], seq.steps[1]
    root = [front.center[0], front.center[1], front.center[2] + cfg.rest_height]
    vel = [0.0, 0.0, 0.0]
    if cfg.reset_jitter > 0:
        if rng is None:
            raise ValueError("reset jitter needs an rng")
        jx, jy, vx, vy = rng.normal(0.0, cfg.reset_jitter, 4)
        root[0] += jx
        root[1] += jy
        vel[0] += vx
        vel[1] += vy
    return EnvState(
        root=tuple(root),
        root_vel=tuple(vel),
        stance=front.center,
        swing=rear.center,
        yaw=front.heading,
        stance_slope=_slope_of(front),
        swing_base=rear.center[2],
    )


def observe(state: EnvState, cfg: EnvConfig, first: Step, second: Step) -> np.ndarray:
    """Observation with ``first``/``second`` as the two upcoming stones.

    Layout: root height above the lower foot; root velocity; root minus
    stance foot; swing foot minus root; yaw error to the first stone; two
    foot contact flags; first and second stone relative to the root; and,
    with ``observe_tilt``, the roll/pitch of both stones. Vectors are in the
    yaw-aligned root frame.
    """
    c, s = math.cos(state.yaw), math.sin(state.yaw)
    rx, ry, rz = state.root

    def rot(dx, dy, dz):
        return c * dx + s * dy, -s * dx + c * dy, dz

    vx, vy, vz = state.root_vel
    sx, sy, sz = state.stance
    wx, wy, wz = state.swing
    t1 = rot(first.center[0] - rx, first.center[1] - ry, first.center[2] - rz)
    t2 = rot(second.center[0] - rx, second.center[1] - ry, second.center[2] - rz)
    obs = [
        state.root_height,
        *rot(vx, vy, vz),
        *rot(rx - sx, ry - sy, rz - sz),
        *rot(wx - rx, wy - ry, wz - rz),
        math.atan2(t1[1], t1[0]),
        *state.contacts,
        *t1,
        *t2,
    ]
    if cfg.observe_tilt:
        obs += [first.surface_roll, first.surface_pitch, second.surface_roll, second.surface_pitch]
    return np.array(obs)


def observation(state: EnvState, seq: StepSequence, cfg: EnvConfig) -> np.ndarray:
    first, second = seq.upcoming()
    return observe(state, cfg, first, second)


def _owner(seq: StepSequence, x: float, y: float, lo: int) -> Optional[int]:
    """Stone whose footprint covers ``(x, y)``; overlapping discs split by nearest center."""
    best, best_d = None, math.inf
    for j in range(lo, len(seq.steps)):
        d = seq.steps[j].horizontal_distance(x, y)
        if d <= seq.steps[j].radius and d < best_d:
            best, best_d = j, d
    return best


def _landing(prev, new, seq, fld):
    """Return ``(step_index or None, landing point)`` for a downward surface crossing."""
    lo = max(0, seq.target_index - 3)
    j = _owner(seq, new[0], new[1], lo)
    if j is not None:
        st = seq.steps[j]
        before = st.surface_height(prev[0], prev[1])
        after = st.surface_height(new[0], new[1])
        if prev[2] > before and new[2] <= after:
            return j, (new[0], new[1], after)
        return None, None
    if fld is not None and fld.contains(new[0], new[1]) and fld.contains(prev[0], prev[1]):
        before = fld.height(prev[0], prev[1])
        after = fld.height(new[0], new[1])
        if prev[2] > before and new[2] <= after:
            return -1, (new[0], new[1], after)
    return None, None


def env_step(
    state: EnvState,
    action,
    seq: StepSequence,
    cfg: EnvConfig = EnvConfig(),
    sampler=None,
    rng: Optional[np.random.Generator] = None,
    field: Optional[HeightField] = None,
) -> StepOutcome:
    """Advance one control tick.

    ``sampler``/``rng`` are used to extend unbounded sequences when a target
    is replaced. ``field`` adds continuous terrain below the stones.
    """
    rc = cfg.rewards
    a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    if a.shape != (N_ACTIONS,):
        raise ValueError(f"action must have {N_ACTIONS} components")
    ux, uy, uz, bx, by = (float(v) for v in a)
    dt, g, h0, L = cfg.dt, cfg.gravity, cfg.rest_height, cfg.leg_length

    seq = tick_sequence(seq, sampler, rng, limits=None)
    target = seq.target
    c, s = math.cos(state.yaw), math.sin(state.yaw)

    # root: lean + pendulum divergence + downhill push, vertical spring
    rx, ry, rz = state.root
    vx, vy, vz = state.root_vel
    sx, sy, sz = state.stance
    wx, wy, wz = state.swing
    w0 = g / h0
    ax = cfg.lean_accel * (c * bx - s * by) + w0 * (rx - sx) + g * cfg.tilt_push * state.stance_slope[0]
    ay = cfg.lean_accel * (s * bx + c * by) + w0 * (ry - sy) + g * cfg.tilt_push * state.stance_slope[1]
    az = cfg.k_h * (min(sz, wz) + h0 - rz) - cfg.d_h * vz
    vx, vy, vz = vx + ax * dt, vy + ay * dt, vz + az * dt
    root_prev = state.root
    rx, ry, rz = rx + vx * dt, ry + vy * dt, rz + vz * dt

    # swing foot: kinematic, must lift to leave the ground, limited by leg reach
    grounded = state.swing_grounded
    if grounded and uz <= 0.0:
        nw = (wx, wy, wz)
    else:
        k = cfg.swing_speed * dt
        nw = (wx + k * (c * ux - s * uy), wy + k * (s * ux + c * uy), wz + k * uz)
        grounded = False
    dx, dy, dz = nw[0] - rx, nw[1] - ry, nw[2] - rz
    reach = math.sqrt(dx * dx + dy * dy + dz * dz)
    if reach > L:
        scale = L / reach
        nw = (rx + dx * scale, ry + dy * scale, rz + dz * scale)
        grounded = False
    swing_vel = ((nw[0] - wx) / dt, (nw[1] - wy) / dt, (nw[2] - wz) / dt)

    new = dataclasses.replace(
        state,
        root=(rx, ry, rz),
        root_vel=(vx, vy, vz),
        swing=nw,
        swing_grounded=grounded,
        lean=(cfg.lean_angle_scale * by, cfg.lean_angle_scale * bx),
        tick=state.tick + 1,
    )

    terms = dict.fromkeys(R.REWARD_TERMS, 0.0)
    reason = ""
    hit = False
    if not grounded:
        j, point = _landing((wx, wy, wz), nw, seq, field)
        if j is not None:
            if j == seq.target_index and not seq.pending:
                hit = True
                d = math.dist(point, target.center)
                terms["target"] = R.target_reward(d, True, rc)
                seq = on_target_contact(seq, cfg.look_ahead_delay, sampler, rng, limits=None)
                new = _swap(new, point, j, seq.steps[j], yaw=seq.steps[j].heading, field=field)
                if j >= 3:
                    new = dataclasses.replace(new, steps_achieved=new.steps_achieved + 1)
            elif j >= 0 and seq.contacted(j):
                # back on a stone already used: double support, stance unchanged
                new = dataclasses.replace(new, swing=point, swing_grounded=True)
            else:
                reason = "misstep"

    # progress is measured against the target that was live during this tick
    tx, ty = target.center[0], target.center[1]
    d_prev = math.hypot(root_prev[0] - tx, root_prev[1] - ty)
    d_cur = math.hypot(new.root[0] - tx, new.root[1] - ty)
    terms["progress"] = R.progress_reward(d_prev, d_cur, dt)

    c2, s2 = math.cos(new.yaw), math.sin(new.yaw)
    v = cfg.swing_speed
    rates = (
        (c2 * swing_vel[0] + s2 * swing_vel[1]) / v,
        (-s2 * swing_vel[0] + c2 * swing_vel[1]) / v,
        swing_vel[2] / v,
        (c2 * vx + s2 * vy) / v,
        (-s2 * vx + c2 * vy) / v,
    )
    terms["energy"] = R.energy_penalty(a, rates, rc.energy_coeffs)
    terms["limit"] = R.limit_penalty(a, (-1.0, 1.0), rc.limit_coeff, rc.limit_fraction)
    terms["posture"] = R.posture_penalty(new.lean[0], new.lean[1], rc)
    terms["speed"] = R.speed_penalty(math.sqrt(vx * vx + vy * vy + vz * vz), rc.speed_cap)

    if not reason:
        if not new.is_finite():
            reason = "non_finite"
        elif not new.swing_grounded and new.swing[2] < (
            min(new.stance[2], target.center[2], new.swing_base) - cfg.void_margin
        ):
            reason = "fell"
        elif math.dist(new.root, new.stance) > L:
            reason = "overextended"
    bonus, collapsed = R.alive_check(new.root_height, rc)
    if collapsed and not reason:
        reason = "collapsed"
    if not reason:
        terms["alive"] = bonus
        if seq.complete:
            reason = "complete"
        elif new.tick >= cfg.max_ticks:
            reason = "timeout"
    if reason == "non_finite":
        terms = dict.fromkeys(R.REWARD_TERMS, 0.0)
        obs = np.zeros(cfg.obs_dim)
    else:
        obs = observation(new, seq, cfg)
    return StepOutcome(new, seq, obs, terms, bool(reason), reason, hit)


def _swap(state: EnvState, point, j: int, step: Step, yaw: float, field) -> EnvState:
    """The landed swing foot becomes the stance foot."""
    if field is not None and step.horizontal_distance(point[0], point[1]) > step.radius:
        slope = field.gradient(point[0], point[1])
    else:
        slope = _slope_of(step)
    return dataclasses.replace(
        state,
        stance=point,
        swing=state.stance,
        swing_grounded=True,
        swing_base=state.stance[2],
        stance_foot=1 - state.stance_foot,
        stance_step=j,
        yaw=yaw,
        stance_slope=slope,
    )


class StepperEnv:
    """Stateful wrapper used for rollouts: owns a sequence, a state and a sampler."""

    def __init__(self, cfg: EnvConfig = EnvConfig(), field: Optional[HeightField] = None):
        self.cfg = cfg
        self.field = field
        self.state: Optional[EnvState] = None
        self.seq: Optional[StepSequence] = None
        self.sampler = None
        self.rng: Optional[np.random.Generator] = None

    def reset(self, sampler, rng: np.random.Generator, horizon: Optional[int] = None,
              start: StartPose = StartPose(), seq: Optional[StepSequence] = None) -> np.ndarray:
        self.sampler, self.rng = sampler, rng
        if seq is None:
            seq = init_sequence(start, horizon, sampler, rng, self.cfg.nominal_r,
                                self.cfg.radius, limits=None)
        self.seq = seq
        self.state = reset(seq, self.cfg, rng)
        return observation(self.state, self.seq, self.cfg)

    def step(self, action) -> StepOutcome:
        out = env_step(self.state, action, self.seq, self.cfg, self.sampler, self.rng, self.field)
        self.state, self.seq = out.state, out.seq
        return out

    def observe_imagined(self, first: Step, second: Step) -> np.ndarray:
        return observe(self.state, self.cfg, first, second)
