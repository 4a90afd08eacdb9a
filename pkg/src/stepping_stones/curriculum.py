"""Step-parameter sampling strategies.

Fixed-order strategies grow a centered window of the grid one ring per stage
whenever the mean episode return of an iteration clears a threshold. The
adaptive strategy instead asks the critic how valuable an imagined upcoming
step would be (the policy's *capability* for that step) and concentrates
sampling where the relative capability is close to a setpoint ``beta``.
Difficult-favored sampling is the same rule with ``beta = 0``.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, TextIO

import numpy as np

from .env import StepperEnv
from .grid import CURRICULUM_DIMS, GridDistribution, ParamGrid, cell_params, make_sampler, stage_boundary, stage_mask, boundary_mask
from .steps import Step, StepParams, generate_next_step

STRATEGIES = ("uniform", "fixed_order", "fixed_order_boundary", "difficult_favored", "adaptive")
ADAPTIVE = ("difficult_favored", "adaptive")


@dataclass(frozen=True)
class CurriculumConfig:
    strategy: str = "adaptive"
    reward_threshold: float = 2500.0
    beta: float = 0.9
    k_sens: float = 10.0
    eval_steps: int = 5
    vary_first: bool = False
    eval_ticks: int = 600

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.k_sens <= 0:
            raise ValueError("k_sens must be positive")
        if self.eval_steps < 1 or self.eval_ticks < 1:
            raise ValueError("eval_steps and eval_ticks must be >= 1")

    @property
    def effective_beta(self) -> float:
        return 0.0 if self.strategy == "difficult_favored" else self.beta


@dataclass(frozen=True)
class CapabilityGrid:
    """Estimated capability (critic value, reward units) of every grid cell."""

    grid: ParamGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"expected shape {self.grid.shape}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("capabilities must be finite")
        object.__setattr__(self, "values", values)

    @property
    def c_max(self) -> float:
        return float(self.values.max())

    def argmax(self) -> tuple[int, ...]:
        """First maximizing cell in row-major order."""
        return self.grid.index_of(np.unravel_index(int(np.argmax(self.values)), self.grid.shape))

    def __getitem__(self, index) -> float:
        return float(self.values[self.grid.position(index)])


@dataclass(frozen=True)
class CurriculumState:
    stage: int
    current_dist: GridDistribution
    capability: Optional[CapabilityGrid] = None


def window_mask(grid: ParamGrid, k: int, boundary: bool = False) -> np.ndarray:
    return boundary_mask(grid, k) if boundary else stage_mask(grid, k)


def initial_state(cfg: CurriculumConfig, grid: ParamGrid) -> CurriculumState:
    if cfg.strategy in ("fixed_order", "fixed_order_boundary"):
        mask = window_mask(grid, 1, cfg.strategy == "fixed_order_boundary")
        return CurriculumState(1, GridDistribution.uniform(grid, mask))
    return CurriculumState(1, GridDistribution.uniform(grid))


def adaptive_distribution(cap: CapabilityGrid, k_sens: float = 10.0, beta: float = 0.9) -> GridDistribution:
    """Mass proportional to ``exp(-k_sens * |C / C_max - beta|)``.

    A non-positive ``C_max`` (untrained or degenerate critic) yields the
    uniform distribution.
    """
    c_max = cap.c_max
    if c_max <= 0.0:
        return GridDistribution.uniform(cap.grid)
    gap = np.abs(cap.values / c_max - beta)
    # shifting the exponent keeps the ratios and avoids underflow
    weights = np.exp(-k_sens * (gap - gap.min()))
    return GridDistribution.from_weights(cap.grid, weights)


def next_distribution(cfg: CurriculumConfig, state: CurriculumState, grid: ParamGrid,
                      stats: Mapping) -> CurriculumState:
    """Curriculum state for the coming iteration.

    ``stats["mean_return"]`` is the mean undiscounted return of the episodes
    finished in the last iteration (``None`` when none finished). Adaptive
    strategies also need ``stats["capability"]``, which may be ``None`` when
    the estimate produced no samples; the distribution is then uniform.
    """
    if cfg.strategy == "uniform":
        return CurriculumState(state.stage, GridDistribution.uniform(grid))
    if cfg.strategy in ADAPTIVE:
        if "capability" not in stats:
            raise ValueError(f"strategy {cfg.strategy!r} needs a capability estimate")
        cap = stats["capability"]
        if cap is None:
            return CurriculumState(state.stage, GridDistribution.uniform(grid), None)
        return CurriculumState(state.stage, adaptive_distribution(cap, cfg.k_sens, cfg.effective_beta), cap)
    stage = state.stage
    mean_return = stats.get("mean_return")
    if mean_return is not None and mean_return >= cfg.reward_threshold and stage < grid.n_stages:
        stage += 1
    mask = window_mask(grid, stage, cfg.strategy == "fixed_order_boundary")
    return CurriculumState(stage, GridDistribution.uniform(grid, mask))


def easy_mask(grid: ParamGrid) -> np.ndarray:
    """Stage-1 cells with flat (untilted) stones."""
    mask = stage_mask(grid, 1).copy()
    for axis, name in enumerate(grid.names):
        if name not in CURRICULUM_DIMS:
            keep = np.zeros(grid.resolution, dtype=bool)
            keep[grid.half] = True
            shape = [1] * grid.dims
            shape[axis] = grid.resolution
            mask &= keep.reshape(shape)
    return mask


def imagined_pairs(grid: ParamGrid, stance: Step, vary_first: bool = False) -> list:
    """For each cell (row-major), the two imagined upcoming stones after ``stance``.

    One stone is nominal, straight ahead at ``r = (r_min + r_max) / 2``; the
    other carries the cell's parameters, with ``r`` taken from the cell if it
    is a grid dimension and the same midpoint otherwise.
    """
    r_mid = grid.nominal_r()
    nominal = StepParams(r_mid)
    pairs = []
    for index in grid.cells():
        p = cell_params(grid, index)
        if "r" not in grid.names:
            p = dataclasses.replace(p, r=r_mid)
        if vary_first:
            first = generate_next_step(stance, p, limits=None)
            second = generate_next_step(first, nominal, limits=None)
        else:
            first = generate_next_step(stance, nominal, limits=None)
            second = generate_next_step(first, p, limits=None)
        pairs.append((first, second))
    return pairs


def estimate_capability(
    act_fn: Callable[[np.ndarray], np.ndarray],
    value_fn: Callable[[np.ndarray], np.ndarray],
    env: StepperEnv,
    grid: ParamGrid,
    cfg: CurriculumConfig,
    rng: np.random.Generator,
) -> Optional[CapabilityGrid]:
    """Mean critic value per cell over imagined observations.

    The policy ``act_fn`` walks easy (stage-1, flat) stones; after each of the
    first ``cfg.eval_steps`` target contacts, every cell's imagined pair of
    upcoming stones is swapped into the observation and scored by
    ``value_fn``. The physical sequence is never touched. Returns ``None`` if
    the walk produced no contact.
    """
    sampler = make_sampler(GridDistribution.uniform(grid, easy_mask(grid)))
    obs = env.reset(sampler, rng)
    total = np.zeros(grid.size)
    contacts = 0
    for _ in range(cfg.eval_ticks):
        out = env.step(act_fn(obs))
        obs = out.obs
        if out.target_hit:
            stance = env.seq.steps[env.state.stance_step]
            batch = np.stack([env.observe_imagined(a, b) for a, b in imagined_pairs(grid, stance, cfg.vary_first)])
            total += np.asarray(value_fn(batch), dtype=float).reshape(-1)
            contacts += 1
            if contacts >= cfg.eval_steps:
                break
        if out.done:
            break
    if contacts == 0:
        return None
    return CapabilityGrid(grid, (total / contacts).reshape(grid.shape))


def write_heatmap_csv(dist: GridDistribution, fh: TextIO, cap: Optional[CapabilityGrid] = None) -> None:
    """Rows of ``<dim>_idx..., capability, probability`` (capability blank if absent)."""
    grid = dist.grid
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([f"{n}_idx" for n in grid.names] + ["capability", "probability"])
    for pos in np.ndindex(*grid.shape):
        c = "" if cap is None else repr(float(cap.values[pos]))
        writer.writerow(list(grid.index_of(pos)) + [c, repr(float(dist.probs[pos]))])
