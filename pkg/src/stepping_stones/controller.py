"""Hand-written reference controller for the stepper.

It swings the free foot along a lift-carry-lower arc to the target center and
steers the root towards a point that slides from the stance foot to the
midpoint of the step as the swing progresses. It reads the environment
directly (it is a scripted baseline, not a learned policy).
"""
from __future__ import annotations

import math

import numpy as np

from .env import StepperEnv


class OracleController:
    def __init__(self, clearance=0.1, kp=20.0, kd=9.0, lift_rate=0.35, carry=0.9, lead=0.5,
                 land_after=0.4):
        self.clearance = clearance
        self.land_after = land_after
        self.kp = kp
        self.kd = kd
        self.lift_rate = lift_rate
        self.carry = carry
        self.lead = lead

    def __call__(self, env: StepperEnv) -> np.ndarray:
        cfg, st, seq = env.cfg, env.state, env.seq
        c, s = math.cos(st.yaw), math.sin(st.yaw)
        rx, ry, rz = st.root
        vx, vy, _ = st.root_vel
        sx, sy, sz = st.stance
        wx, wy, wz = st.swing
        tx, ty, tz = seq.target.center

        u = [0.0, 0.0, 0.0]
        if seq.pending:
            gx, gy = sx, sy
        else:
            dx, dy = tx - wx, ty - wy
            dist = math.hypot(dx, dy)
            # the swing starts roughly one stride behind the stance foot
            d0 = max(2.0 * math.hypot(tx - sx, ty - sy), 1e-6)
            progress = min(max(1.0 - dist / d0, 0.0), 1.0)
            # clear every stone the foot may pass over on its way
            passed = seq.steps[max(0, seq.target_index - 2):seq.target_index + 1]
            top = max([sz] + [st_.center[2] for st_ in passed]) + self.clearance
            span_x, span_y = tx - sx, ty - sy
            span2 = span_x * span_x + span_y * span_y
            root_frac = ((rx - sx) * span_x + (ry - sy) * span_y) / span2 if span2 > 1e-12 else 1.0
            if dist > 0.05 or root_frac < self.land_after:
                z_goal = top
            else:
                z_goal = tz - 0.1
            step_v = cfg.swing_speed * cfg.dt
            uz = (z_goal - wz) / step_v
            u[2] = min(max(uz, -self.lift_rate), self.lift_rate)
            if st.swing_grounded:
                u[2] = self.lift_rate
            if dist > 1e-9 and (wz > top - 0.06 or dist <= 0.05):
                mag = min(self.carry, dist / step_v)
                wdx, wdy = mag * dx / dist, mag * dy / dist
                u[0] = c * wdx + s * wdy
                u[1] = -s * wdx + c * wdy
            frac = max(self.lead * progress, 0.5 * self.land_after)
            gx, gy = sx + frac * (tx - sx), sy + frac * (ty - sy)

        w0 = cfg.gravity / cfg.rest_height
        ax = self.kp * (gx - rx) - self.kd * vx - w0 * (rx - sx) - cfg.gravity * cfg.tilt_push * st.stance_slope[0]
        ay = self.kp * (gy - ry) - self.kd * vy - w0 * (ry - sy) - cfg.gravity * cfg.tilt_push * st.stance_slope[1]
        bx = (c * ax + s * ay) / cfg.lean_accel
        by = (-s * ax + c * ay) / cfg.lean_accel
        return np.clip(np.array([u[0], u[1], u[2], bx, by]), -1.0, 1.0)


def run_oracle(env: StepperEnv, sampler, rng, horizon=None, max_ticks=None, controller=None):
    """Roll the oracle out; returns ``(steps_achieved, target_reward_total, outcome)``."""
    controller = controller or OracleController()
    env.reset(sampler, rng, horizon=horizon)
    total_target = 0.0
    out = None
    limit = max_ticks or env.cfg.max_ticks
    for _ in range(limit):
        out = env.step(controller(env))
        total_target += out.terms["target"]
        if out.done:
            break
    return env.state.steps_achieved, total_target, out
