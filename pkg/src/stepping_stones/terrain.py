"""Continuous terrain: Perlin height fields and footstep projection."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import BinaryIO, Callable, TextIO

import numpy as np

from .steps import EVAL_RADIUS, Step, StepSequence

_MAGIC = b"HFLD"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIddd")


@dataclass
class HeightField:
    """Elevations on a regular grid; ``heights[i, j]`` sits at ``origin + (i, j) * cell_size``."""

    heights: np.ndarray
    cell_size: float = 0.1
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=float)
        if self.heights.ndim != 2 or min(self.heights.shape) < 2:
            raise ValueError("heights must be a 2D grid with at least 2x2 points")
        if not np.all(np.isfinite(self.heights)):
            raise ValueError("heights must be finite")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")

    @classmethod
    def from_function(cls, fn: Callable, shape, cell_size=0.1, origin=(0.0, 0.0)) -> "HeightField":
        xs = origin[0] + cell_size * np.arange(shape[0])
        ys = origin[1] + cell_size * np.arange(shape[1])
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return cls(fn(X, Y), cell_size, origin)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        nx, ny = self.heights.shape
        x0, y0 = self.origin
        return x0, x0 + (nx - 1) * self.cell_size, y0, y0 + (ny - 1) * self.cell_size

    def contains(self, x: float, y: float) -> bool:
        x0, x1, y0, y1 = self.extent
        return x0 <= x <= x1 and y0 <= y <= y1

    def _locate(self, x, y):
        if not self.contains(x, y):
            raise ValueError(f"({x}, {y}) outside the height field")
        nx, ny = self.heights.shape
        fx = (x - self.origin[0]) / self.cell_size
        fy = (y - self.origin[1]) / self.cell_size
        i = min(int(math.floor(fx)), nx - 2)
        j = min(int(math.floor(fy)), ny - 2)
        return i, j, fx - i, fy - j

    def height(self, x: float, y: float) -> float:
        """Bilinear elevation at ``(x, y)``."""
        i, j, u, v = self._locate(x, y)
        h = self.heights
        return float(
            (1 - u) * (1 - v) * h[i, j] + u * (1 - v) * h[i + 1, j]
            + (1 - u) * v * h[i, j + 1] + u * v * h[i + 1, j + 1]
        )

    def gradient(self, x: float, y: float) -> tuple[float, float]:
        """Derivative of the bilinear interpolant, ``(dz/dx, dz/dy)``."""
        i, j, u, v = self._locate(x, y)
        h = self.heights
        dx = ((1 - v) * (h[i + 1, j] - h[i, j]) + v * (h[i + 1, j + 1] - h[i, j + 1])) / self.cell_size
        dy = ((1 - u) * (h[i, j + 1] - h[i, j]) + u * (h[i + 1, j + 1] - h[i + 1, j])) / self.cell_size
        return float(dx), float(dy)

    def write_binary(self, fh: BinaryIO) -> None:
        """Header (magic, version, nx, ny, cell size, origin) then row-major float32."""
        nx, ny = self.heights.shape
        fh.write(_HEADER.pack(_MAGIC, _VERSION, nx, ny, self.cell_size, *self.origin))
        fh.write(self.heights.astype("<f4").tobytes(order="C"))

    @classmethod
    def read_binary(cls, fh: BinaryIO) -> "HeightField":
        magic, version, nx, ny, cell, ox, oy = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a height field file")
        data = np.frombuffer(fh.read(4 * nx * ny), dtype="<f4")
        if data.size != nx * ny:
            raise ValueError("truncated height field payload")
        return cls(data.reshape(nx, ny).astype(float), cell, (ox, oy))

    def write_ascii(self, fh: TextIO) -> None:
        """ESRI ASCII grid; the first data row is the largest y."""
        nx, ny = self.heights.shape
        fh.write(f"ncols {nx}\nnrows {ny}\n")
        fh.write(f"xllcorner {self.origin[0]!r}\nyllcorner {self.origin[1]!r}\n")
        fh.write(f"cellsize {self.cell_size!r}\n")
        for j in range(ny - 1, -1, -1):
            fh.write(" ".join(repr(float(z)) for z in self.heights[:, j]) + "\n")

    @classmethod
    def read_ascii(cls, fh: TextIO) -> "HeightField":
        header = {}
        for _ in range(5):
            key, value = fh.readline().split()
            header[key.lower()] = value
        nx, ny = int(header["ncols"]), int(header["nrows"])
        rows = [list(map(float, line.split())) for line in fh if line.strip()]
        if len(rows) != ny or any(len(r) != nx for r in rows):
            raise ValueError("ASCII grid size does not match its header")
        heights = np.array(rows[::-1]).T
        return cls(heights, float(header["cellsize"]),
                   (float(header["xllcorner"]), float(header["yllcorner"])))


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


class PerlinNoise2D:
    """Classic gradient noise with unit gradients; values lie within [-1, 1]."""

    def __init__(self, seed: int):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(256)
        self.perm = np.concatenate([perm, perm])
        angles = rng.uniform(0.0, 2.0 * np.pi, 256)
        self.grads = np.stack([np.cos(angles), np.sin(angles)], axis=-1)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xi = np.floor(x).astype(int)
        yi = np.floor(y).astype(int)
        xf, yf = x - xi, y - yi
        xi &= 255
        yi &= 255
        p = self.perm

        def dot(ix, iy, dx, dy):
            g = self.grads[p[p[ix] + iy]]
            return g[..., 0] * dx + g[..., 1] * dy

        n00 = dot(xi, yi, xf, yf)
        n10 = dot(xi + 1, yi, xf - 1, yf)
        n01 = dot(xi, yi + 1, xf, yf - 1)
        n11 = dot(xi + 1, yi + 1, xf - 1, yf - 1)
        u, v = _fade(xf), _fade(yf)
        nx0 = n00 + u * (n10 - n00)
        nx1 = n01 + u * (n11 - n01)
        return nx0 + v * (nx1 - nx0)


def octave_gain_sum(octaves: int, persistence: float = 0.5) -> float:
    return sum(persistence**o for o in range(octaves))


def perlin_heightfield(
    seed: int,
    size=(201, 201),
    amplitude: float = 0.3,
    frequency: float = 0.25,
    octaves: int = 4,
    cell_size: float = 0.1,
    origin=(-10.0, -10.0),
    persistence: float = 0.5,
    lacunarity: float = 2.0,
) -> HeightField:
    """Fractal Perlin elevations; ``frequency`` is in cycles per meter.

    ``|z| <= amplitude * octave_gain_sum(octaves, persistence)``.
    """
    if octaves < 1:
        raise ValueError("need at least one octave")
    noise = PerlinNoise2D(seed)
    nx, ny = size
    xs = origin[0] + cell_size * np.arange(nx)
    ys = origin[1] + cell_size * np.arange(ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    z = np.zeros_like(X)
    if amplitude != 0.0:
        f, gain = frequency, 1.0
        for _ in range(octaves):
            z += gain * noise(X * f, Y * f)
            f *= lacunarity
            gain *= persistence
        z *= amplitude
    return HeightField(z, cell_size, origin)


def surface_tilt(gradient, heading: float) -> tuple[float, float]:
    """Roll and pitch, in the step's heading frame, of the plane with ``gradient``.

    Pitch is positive when the surface rises along the heading and roll is
    positive when it rises to the left.
    """
    gx, gy = gradient
    c, s = math.cos(heading), math.sin(heading)
    along = gx * c + gy * s
    across = -gx * s + gy * c
    roll = math.atan(across)
    pitch = math.atan2(along, math.hypot(1.0, across))
    return roll, pitch


def project_footsteps(
    field: HeightField,
    start=(0.0, 0.0),
    n_steps: int = 20,
    step_len: float = 0.7,
    turn_per_step: float = math.radians(5.0),
    start_heading: float = 0.0,
    radius: float = EVAL_RADIUS,
) -> StepSequence:
    """Walk a planar path that turns ``turn_per_step`` each step and drape it on ``field``.

    Footstep ``k`` has heading ``start_heading + k * turn_per_step``; its
    elevation and surface tilt come from the field at its center.
    """
    if n_steps < 3:
        raise ValueError("need at least three footsteps")
    x, y = start
    steps = []
    for k in range(n_steps):
        heading = start_heading + k * turn_per_step
        if k > 0:
            x += step_len * math.cos(heading)
            y += step_len * math.sin(heading)
        roll, pitch = surface_tilt(field.gradient(x, y), heading)
        steps.append(Step((x, y, field.height(x, y)), heading, roll, pitch, radius))
    return StepSequence(steps=tuple(steps), target_index=2, horizon=n_steps)
