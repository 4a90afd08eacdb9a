"""Discretized step-parameter space and probability mass over its cells.

Cells are addressed by signed index tuples; with the default resolution of 11
each index runs over -5..5 and index 0 is the midpoint of its dimension.
Distributions are dense arrays over the whole grid.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Optional, TextIO

import numpy as np

from .steps import PHI_MAX, PSI_MAX, THETA_MAX, StepParams

DIM_ORDER = ("r", "psi", "theta", "phi_x", "phi_y")
CURRICULUM_DIMS = ("r", "psi", "theta")


@dataclass(frozen=True)
class ParamGrid:
    """Regular grid over the active step dimensions.

    ``r_range`` is used for the step length whenever ``r`` is not one of the
    grid dimensions (the 2D case samples it continuously).
    """

    bounds: dict
    resolution: int = 11
    r_range: tuple[float, float] = (0.65, 0.8)
    names: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        if self.resolution < 1 or self.resolution % 2 == 0:
            raise ValueError("resolution must be a positive odd number")
        unknown = set(self.bounds) - set(DIM_ORDER)
        if unknown:
            raise ValueError(f"unknown grid dimensions: {sorted(unknown)}")
        for name, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise ValueError(f"bounds for {name} must satisfy min < max")
        names = tuple(n for n in DIM_ORDER if n in self.bounds)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "bounds", {n: tuple(map(float, self.bounds[n])) for n in names})

    @property
    def dims(self) -> int:
        return len(self.names)

    @property
    def half(self) -> int:
        return (self.resolution - 1) // 2

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.dims

    @property
    def size(self) -> int:
        return self.resolution**self.dims

    @property
    def n_stages(self) -> int:
        return self.half + 1

    def values(self, name: str) -> np.ndarray:
        """Grid points of one dimension, identical to what :func:`cell_params` returns."""
        lo, hi = self.bounds[name]
        if self.half == 0:
            return np.array([0.5 * (lo + hi)])
        out = 0.5 * (lo + hi) + np.arange(-self.half, self.half + 1) * (hi - lo) / (self.resolution - 1)
        out[0], out[-1] = lo, hi
        return out

    def check_index(self, index) -> tuple[int, ...]:
        index = tuple(int(i) for i in index)
        if len(index) != self.dims:
            raise IndexError(f"expected {self.dims} indices, got {len(index)}")
        for i in index:
            if abs(i) > self.half:
                raise IndexError(f"cell index {index} outside +/-{self.half}")
        return index

    def position(self, index) -> tuple[int, ...]:
        """Array position of a signed cell index."""
        return tuple(i + self.half for i in self.check_index(index))

    def index_of(self, position) -> tuple[int, ...]:
        return tuple(int(p) - self.half for p in position)

    def cells(self) -> Iterator[tuple[int, ...]]:
        for pos in np.ndindex(*self.shape):
            yield self.index_of(pos)

    def nominal_r(self) -> float:
        lo, hi = self.bounds.get("r", self.r_range)
        return 0.5 * (lo + hi)

    def param_arrays(self) -> dict[str, np.ndarray]:
        """Per-dimension parameter value of every cell, each shaped like the grid."""
        axes = [self.values(n) for n in self.names]
        mesh = np.meshgrid(*axes, indexing="ij")
        return dict(zip(self.names, mesh))


def grid_2d(psi_max=PSI_MAX, theta_max=THETA_MAX, resolution=11, r_range=(0.65, 0.8)) -> ParamGrid:
    return ParamGrid({"psi": (-psi_max, psi_max), "theta": (-theta_max, theta_max)},
                     resolution, r_range)


def grid_3d(r_range=(0.65, 1.5), psi_max=PSI_MAX, theta_max=THETA_MAX, resolution=11) -> ParamGrid:
    return ParamGrid(
        {"r": r_range, "psi": (-psi_max, psi_max), "theta": (-theta_max, theta_max)},
        resolution,
        r_range,
    )


def grid_5d(r_range=(0.65, 1.5), psi_max=PSI_MAX, theta_max=THETA_MAX, phi_max=PHI_MAX,
            resolution=11) -> ParamGrid:
    return ParamGrid(
        {
            "r": r_range,
            "psi": (-psi_max, psi_max),
            "theta": (-theta_max, theta_max),
            "phi_x": (-phi_max, phi_max),
            "phi_y": (-phi_max, phi_max),
        },
        resolution,
        r_range,
    )


def cell_params(grid: ParamGrid, index) -> StepParams:
    """Exact parameter values at a cell; off-grid ``r`` takes its nominal value."""
    index = grid.check_index(index)
    values = {"r": grid.nominal_r()}
    for name, i in zip(grid.names, index):
        lo, hi = grid.bounds[name]
        # anchored on the midpoint so the centre cell is exact, ends snapped to the bounds
        if grid.half and abs(i) == grid.half:
            values[name] = hi if i > 0 else lo
        else:
            values[name] = 0.5 * (lo + hi) + (i * (hi - lo) / (grid.resolution - 1) if grid.half else 0.0)
    return StepParams(**values)


def _check_stage(grid: ParamGrid, k: int) -> None:
    if not 1 <= k <= grid.n_stages:
        raise ValueError(f"stage {k} outside 1..{grid.n_stages}")


def stage_mask(grid: ParamGrid, k: int) -> np.ndarray:
    """Boolean mask of the stage-``k`` subgrid.

    Centered dimensions keep indices with ``|i| <= k-1``; ``r`` grows from its
    minimum by two grid points per stage; tilt dimensions are left open.
    """
    _check_stage(grid, k)
    h = grid.half
    idx = np.arange(-h, h + 1)
    per_dim = []
    for name in grid.names:
        if name == "r":
            per_dim.append(idx <= -h + 2 * (k - 1))
        elif name in CURRICULUM_DIMS:
            per_dim.append(np.abs(idx) <= k - 1)
        else:
            per_dim.append(np.ones_like(idx, dtype=bool))
    mask = per_dim[0]
    for m in per_dim[1:]:
        mask = np.logical_and.outer(mask, m)
    return mask


def boundary_mask(grid: ParamGrid, k: int) -> np.ndarray:
    inner = stage_mask(grid, k)
    if k == 1:
        return inner
    return inner & ~stage_mask(grid, k - 1)


def mask_cells(grid: ParamGrid, mask: np.ndarray) -> frozenset:
    return frozenset(grid.index_of(pos) for pos in zip(*np.nonzero(mask)))


def stage_subgrid(grid: ParamGrid, k: int) -> frozenset:
    return mask_cells(grid, stage_mask(grid, k))


def stage_boundary(grid: ParamGrid, k: int) -> frozenset:
    return mask_cells(grid, boundary_mask(grid, k))


class GridDistribution:
    """Probability mass over the cells of a grid (dense array)."""

    def __init__(self, grid: ParamGrid, probs, atol: float = 1e-9):
        probs = np.asarray(probs, dtype=float)
        if probs.shape != grid.shape:
            raise ValueError(f"expected shape {grid.shape}, got {probs.shape}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValueError("probabilities must be finite and non-negative")
        total = probs.sum()
        if abs(total - 1.0) > atol:
            raise ValueError(f"probabilities sum to {total}, not 1")
        self.grid = grid
        self.probs = probs

    @classmethod
    def uniform(cls, grid: ParamGrid, mask: Optional[np.ndarray] = None) -> "GridDistribution":
        if mask is None:
            mask = np.ones(grid.shape, dtype=bool)
        count = int(mask.sum())
        if count == 0:
            raise ValueError("cannot build a uniform distribution over no cells")
        return cls(grid, mask / count)

    @classmethod
    def point(cls, grid: ParamGrid, index) -> "GridDistribution":
        probs = np.zeros(grid.shape)
        probs[grid.position(index)] = 1.0
        return cls(grid, probs)

    @classmethod
    def from_weights(cls, grid: ParamGrid, weights) -> "GridDistribution":
        weights = np.asarray(weights, dtype=float)
        return cls(grid, weights / weights.sum())

    def __getitem__(self, index) -> float:
        return float(self.probs[self.grid.position(index)])

    def support(self) -> frozenset:
        return mask_cells(self.grid, self.probs > 0)

    def items(self) -> Iterator[tuple[tuple[int, ...], float]]:
        for pos in np.ndindex(*self.grid.shape):
            yield self.grid.index_of(pos), float(self.probs[pos])

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        return sample_cell(self, rng, size)


def sample_cell(dist: GridDistribution, rng: np.random.Generator, size: Optional[int] = None):
    """Draw cell index tuples with probability ``dist[index]``.

    With ``size`` the result is an ``(size, dims)`` integer array.
    """
    flat = dist.probs.ravel()
    cdf = np.cumsum(flat)
    cdf /= cdf[-1]
    u = rng.random() if size is None else rng.random(size)
    pos = np.searchsorted(cdf, u, side="right")
    pos = np.minimum(pos, flat.size - 1)
    coords = np.stack(np.unravel_index(pos, dist.grid.shape), axis=-1) - dist.grid.half
    if size is None:
        return tuple(int(c) for c in coords)
    return coords


def make_sampler(dist: GridDistribution):
    """Step sampler drawing a cell from ``dist``; off-grid ``r`` is uniform in ``r_range``."""
    grid = dist.grid
    has_r = "r" in grid.names

    def sampler(rng: np.random.Generator) -> StepParams:
        index = sample_cell(dist, rng)
        p = cell_params(grid, index)
        if not has_r:
            lo, hi = grid.r_range
            p = StepParams(float(rng.uniform(lo, hi)), p.psi, p.theta, p.phi_x, p.phi_y)
        return p

    return sampler


def write_distribution_csv(dist: GridDistribution, fh: TextIO, extra: Optional[dict] = None) -> None:
    """CSV rows ``<dim>_idx..., probability[, extra columns]`` in row-major order."""
    extra = extra or {}
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([f"{n}_idx" for n in dist.grid.names] + ["probability"] + list(extra))
    for pos in np.ndindex(*dist.grid.shape):
        row = list(dist.grid.index_of(pos)) + [repr(float(dist.probs[pos]))]
        row += [repr(float(arr[pos])) for arr in extra.values()]
        writer.writerow(row)


def read_distribution_csv(grid: ParamGrid, fh: TextIO) -> GridDistribution:
    reader = csv.reader(fh)
    header = next(reader)
    d = grid.dims
    if header[:d] != [f"{n}_idx" for n in grid.names] or header[d] != "probability":
        raise ValueError(f"unexpected header {header}")
    probs = np.zeros(grid.shape)
    for row in reader:
        probs[grid.position(row[:d])] = float(row[d])
    return GridDistribution(grid, probs)
