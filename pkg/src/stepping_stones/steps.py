"""Stepping-stone sequences.

Steps are chained in spherical coordinates relative to the previous stone:
length ``r``, relative yaw ``psi`` and relative pitch ``theta``. The optional
surface tilt ``(phi_x, phi_y)`` is applied about the new step's own axes after
its yaw. All objects here are immutable values; anything random takes an
explicit ``numpy.random.Generator``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, TextIO

import numpy as np

PSI_MAX = math.radians(20.0)
THETA_MAX = math.radians(50.0)
PHI_MAX = math.radians(20.0)
R_MIN = 0.65
R_MAX = 1.5

#: Vertical offset of the two start steps relative to the start pose.
START_DROP = 0.01
EVAL_RADIUS = 0.25
TRAIN_RADIUS = 5 * EVAL_RADIUS


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class StepLimits:
    r_min: float = R_MIN
    r_max: float = R_MAX
    psi_max: float = PSI_MAX
    theta_max: float = THETA_MAX
    phi_max: float = PHI_MAX


DEFAULT_LIMITS = StepLimits()


@dataclass(frozen=True)
class StepParams:
    """Relative description of the next stone (meters / radians)."""

    r: float
    psi: float = 0.0
    theta: float = 0.0
    phi_x: float = 0.0
    phi_y: float = 0.0

    def validate(self, limits: StepLimits = DEFAULT_LIMITS, tol: float = 1e-9) -> None:
        if not limits.r_min - tol <= self.r <= limits.r_max + tol:
            raise ValueError(f"r={self.r} outside [{limits.r_min}, {limits.r_max}]")
        for name, value, bound in (
            ("psi", self.psi, limits.psi_max),
            ("theta", self.theta, limits.theta_max),
            ("phi_x", self.phi_x, limits.phi_max),
            ("phi_y", self.phi_y, limits.phi_max),
        ):
            if abs(value) > bound + tol:
                raise ValueError(f"|{name}|={abs(value)} exceeds {bound}")


@dataclass(frozen=True)
class Step:
    center: tuple[float, float, float]
    heading: float = 0.0
    surface_roll: float = 0.0
    surface_pitch: float = 0.0
    radius: float = TRAIN_RADIUS

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("step radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def rotation(self) -> np.ndarray:
        """World-from-surface rotation: yaw, then roll about x, then pitch about y.

        Positive pitch raises the surface along the heading (same sense as a
        positive step ``theta``); positive roll raises its left side.
        """
        return rot_z(self.heading) @ rot_x(self.surface_roll) @ rot_y(-self.surface_pitch)

    def normal(self) -> np.ndarray:
        return self.rotation()[:, 2]

    def surface_height(self, x: float, y: float) -> float:
        """Height of the (infinite) surface plane of this step above ``(x, y)``."""
        cx, cy, cz = self.center
        if self.surface_roll == 0.0 and self.surface_pitch == 0.0:
            return cz
        n = self.normal()
        return cz - (n[0] * (x - cx) + n[1] * (y - cy)) / n[2]

    def horizontal_distance(self, x: float, y: float) -> float:
        return math.hypot(x - self.center[0], y - self.center[1])


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def generate_next_step(
    prev: Step,
    p: StepParams,
    radius: Optional[float] = None,
    limits: Optional[StepLimits] = DEFAULT_LIMITS,
) -> Step:
    """Place the stone that follows ``prev`` according to ``p``.

    Pass ``limits=None`` to skip the bounds check (used for hand-built
    scenarios and terrain projections).
    """
    if limits is not None:
        p.validate(limits)
    heading = prev.heading + p.psi
    horiz = p.r * math.cos(p.theta)
    cx, cy, cz = prev.center
    center = (
        cx + horiz * math.cos(heading),
        cy + horiz * math.sin(heading),
        cz + p.r * math.sin(p.theta),
    )
    return Step(
        center=center,
        heading=heading,
        surface_roll=p.phi_x,
        surface_pitch=p.phi_y,
        radius=prev.radius if radius is None else radius,
    )


@dataclass(frozen=True)
class StartPose:
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0


Sampler = Callable[[np.random.Generator], StepParams]


@dataclass(frozen=True)
class StepSequence:
    """A realized foothold chain plus target bookkeeping.

    ``steps[target_index]`` is the stone the character must hit next. While a
    look-ahead delay is pending (``pending``), ``delay_counter`` counts the
    ticks left before the target advances.
    """

    steps: tuple[Step, ...]
    target_index: int = 2
    delay_counter: int = 0
    pending: bool = False
    horizon: Optional[int] = None

    @property
    def target(self) -> Step:
        return self.steps[self.target_index]

    @property
    def complete(self) -> bool:
        """True once the final stone of a bounded sequence has been contacted."""
        return (
            self.horizon is not None
            and self.target_index == self.horizon - 1
            and self.pending
        )

    def contacted(self, index: int) -> bool:
        return index < self.target_index or (index == self.target_index and self.pending)

    def upcoming(self) -> tuple[Step, Step]:
        i = self.target_index
        second = self.steps[i + 1] if i + 1 < len(self.steps) else self.steps[i]
        return self.steps[i], second


def fixed_prefix(start: StartPose, nominal_r: float, radius: float) -> tuple[Step, Step, Step]:
    """The three fixed opening stones.

    The first two sit just below the rear and front foot (one nominal length
    apart along the start yaw); the third is flat and straight ahead of the
    front foot, level with the start pose.
    """
    x, y, z = start.position
    c, s = math.cos(start.yaw), math.sin(start.yaw)
    rear = Step((x - nominal_r * c, y - nominal_r * s, z - START_DROP), start.yaw, radius=radius)
    front = Step((x, y, z - START_DROP), start.yaw, radius=radius)
    third = Step((x + nominal_r * c, y + nominal_r * s, z), start.yaw, radius=radius)
    return rear, front, third


def init_sequence(
    start: StartPose = StartPose(),
    horizon: Optional[int] = None,
    sampler: Optional[Sampler] = None,
    rng: Optional[np.random.Generator] = None,
    nominal_r: float = 0.725,
    radius: float = TRAIN_RADIUS,
    limits: Optional[StepLimits] = DEFAULT_LIMITS,
) -> StepSequence:
    if horizon is not None and horizon < 3:
        raise ValueError("horizon must be at least 3")
    seq = StepSequence(steps=fixed_prefix(start, nominal_r, radius), horizon=horizon)
    return _extend(seq, sampler, rng, limits)


def _extend(seq, sampler, rng, limits=DEFAULT_LIMITS) -> StepSequence:
    # keep two stones visible beyond the last contacted one
    want = seq.target_index + 2
    if seq.horizon is not None:
        want = min(want, seq.horizon)
    steps = list(seq.steps)
    while len(steps) < want:
        if sampler is None or rng is None:
            raise ValueError("a sampler and rng are needed to extend the sequence")
        steps.append(generate_next_step(steps[-1], sampler(rng), limits=limits))
    if len(steps) == len(seq.steps):
        return seq
    return dataclasses.replace(seq, steps=tuple(steps))


def on_target_contact(
    seq: StepSequence, look_ahead_delay: int, sampler=None, rng=None, limits=DEFAULT_LIMITS
) -> StepSequence:
    """Register a contact with the current target.

    The target is replaced ``look_ahead_delay`` ticks later (see
    :func:`tick_sequence`); with no delay it is replaced right away, which is
    when ``sampler``/``rng`` are needed. Contacts reported while a replacement
    is already pending are ignored.
    """
    if look_ahead_delay < 0:
        raise ValueError("look_ahead_delay must be non-negative")
    if seq.pending:
        return seq
    marked = dataclasses.replace(seq, pending=True, delay_counter=look_ahead_delay)
    return release_if_due(marked, sampler, rng, limits)


def advance(seq: StepSequence, sampler=None, rng=None, limits=DEFAULT_LIMITS) -> StepSequence:
    """Replace the contacted target by the next stone and top up the look-ahead."""
    if seq.horizon is not None and seq.target_index >= seq.horizon - 1:
        return seq
    nxt = dataclasses.replace(
        seq, target_index=seq.target_index + 1, delay_counter=0, pending=False
    )
    return _extend(nxt, sampler, rng, limits)


def release_if_due(seq: StepSequence, sampler=None, rng=None, limits=DEFAULT_LIMITS) -> StepSequence:
    """Advance immediately if a pending contact has no delay left."""
    if seq.pending and seq.delay_counter == 0 and not seq.complete:
        return advance(seq, sampler, rng, limits)
    return seq


def tick_sequence(seq: StepSequence, sampler=None, rng=None, limits=DEFAULT_LIMITS) -> StepSequence:
    """One control tick of the look-ahead delay countdown."""
    if not seq.pending or seq.complete:
        return seq
    remaining = seq.delay_counter - 1
    if remaining <= 0:
        return advance(seq, sampler, rng, limits)
    return dataclasses.replace(seq, delay_counter=remaining)


@dataclass(frozen=True)
class TargetObservation:
    t1: tuple[float, float, float]
    t2: tuple[float, float, float]

    def as_array(self) -> np.ndarray:
        return np.array(self.t1 + self.t2)


def to_root_frame(offset: Sequence[float], root_yaw: float) -> tuple[float, float, float]:
    c, s = math.cos(root_yaw), math.sin(root_yaw)
    dx, dy, dz = offset
    return (c * dx + s * dy, -s * dx + c * dy, float(dz))


def observe_targets(root_position, root_yaw: float, seq: StepSequence) -> TargetObservation:
    first, second = seq.upcoming()
    return observe_pair(root_position, root_yaw, first.center, second.center)


def observe_pair(root_position, root_yaw, c1, c2) -> TargetObservation:
    rx, ry, rz = root_position
    t1 = to_root_frame((c1[0] - rx, c1[1] - ry, c1[2] - rz), root_yaw)
    t2 = to_root_frame((c2[0] - rx, c2[1] - ry, c2[2] - rz), root_yaw)
    return TargetObservation(t1, t2)


def chain(start: Step, params: Iterable[StepParams], limits=DEFAULT_LIMITS) -> list[Step]:
    """Compose :func:`generate_next_step` over ``params`` (start included)."""
    out = [start]
    for p in params:
        out.append(generate_next_step(out[-1], p, limits=limits))
    return out


def write_steps(steps: Iterable[Step], fh: TextIO) -> None:
    """One stone per line: ``x y z heading roll pitch radius``."""
    for st in steps:
        vals = (*st.center, st.heading, st.surface_roll, st.surface_pitch, st.radius)
        fh.write(" ".join(repr(float(v)) for v in vals) + "\n")


def read_steps(fh: TextIO) -> list[Step]:
    steps = []
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7:
            raise ValueError(f"line {lineno}: expected 7 fields, got {len(parts)}")
        x, y, z, h, roll, pitch, radius = map(float, parts)
        steps.append(Step((x, y, z), h, roll, pitch, radius))
    return steps
