"""Fully connected networks with hand-derived backpropagation.

Parameters of a network live in one flat float64 vector; per-layer weight and
bias arrays are views into it, so optimizers and checkpoints only ever deal
with flat arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

ACTIVATIONS = ("softsign", "relu", "tanh", "linear")


def _act(name, z):
    if name == "softsign":
        return z / (1.0 + np.abs(z))
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, y):
    """Derivative of the activation given its input ``z`` and output ``y``."""
    if name == "softsign":
        d = 1.0 + np.abs(z)
        return 1.0 / (d * d)
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - y * y
    return np.ones_like(z)


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths ``(input, hidden..., output)`` and one activation per non-input layer."""

    widths: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError("need at least an input and an output width, all positive")
        if len(self.activations) != len(self.widths) - 1:
            raise ValueError("need one activation per layer after the input")
        bad = [a for a in self.activations if a not in ACTIVATIONS]
        if bad:
            raise ValueError(f"unknown activations {bad}")

    @property
    def n_params(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.widths[:-1], self.widths[1:]))

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def as_dict(self) -> dict:
        return {"widths": list(self.widths), "activations": list(self.activations)}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["widths"]), tuple(d["activations"]))


def actor_spec(obs_dim: int, act_dim: int, width: int = 256, depth: int = 4) -> NetworkSpec:
    """Softsign on the first three hidden layers, ReLU after that, tanh on the mean."""
    acts = tuple("softsign" if i < 3 else "relu" for i in range(depth)) + ("tanh",)
    return NetworkSpec((obs_dim,) + (width,) * depth + (act_dim,), acts)


def critic_spec(obs_dim: int, width: int = 256, depth: int = 4) -> NetworkSpec:
    return NetworkSpec((obs_dim,) + (width,) * depth + (1,), ("relu",) * depth + ("linear",))


class MLP:
    def __init__(self, spec: NetworkSpec, params: Optional[np.ndarray] = None):
        self.spec = spec
        if params is None:
            params = np.zeros(spec.n_params)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {params.shape}")
        self.params = params.copy()
        self._bind()

    def _bind(self):
        self.weights, self.biases = [], []
        off = 0
        for a, b in zip(self.spec.widths[:-1], self.spec.widths[1:]):
            self.weights.append(self.params[off:off + a * b].reshape(a, b))
            off += a * b
            self.biases.append(self.params[off:off + b])
            off += b

    def __getstate__(self):
        return {"spec": self.spec, "params": self.params}

    def __setstate__(self, state):
        self.spec = state["spec"]
        self.params = state["params"]
        self._bind()

    def set_params(self, flat: np.ndarray) -> None:
        self.params[:] = flat

    @classmethod
    def initialized(cls, spec: NetworkSpec, rng: np.random.Generator,
                    output_scale: float = 1.0) -> "MLP":
        """Glorot-uniform weights, zero biases; the last layer is scaled by ``output_scale``."""
        net = cls(spec)
        last = len(net.weights) - 1
        for i, w in enumerate(net.weights):
            fan_in, fan_out = w.shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            w[...] = rng.uniform(-lim, lim, size=w.shape)
            if i == last:
                w *= output_scale
        return net

    def forward(self, x: np.ndarray, keep: bool = False):
        """Output for a batch ``x`` of shape ``(n, input)`` (or one row).

        With ``keep`` the pre- and post-activations are returned too, for
        :meth:`backward`.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.spec.input_dim:
            raise ValueError(f"input width {x.shape[-1]} != {self.spec.input_dim}")
        ys, zs = [x], []
        h = x
        for w, b, act in zip(self.weights, self.biases, self.spec.activations):
            z = h @ w + b
            h = _act(act, z)
            zs.append(z)
            ys.append(h)
        if keep:
            return h, (zs, ys)
        return h

    def backward(self, cache, grad_out: np.ndarray) -> np.ndarray:
        """Flat gradient of ``sum(grad_out * output)`` with respect to the parameters."""
        zs, ys = cache
        grad = np.empty_like(self.params)
        # walk the flat layout backwards
        offsets = []
        off = 0
        for a, b in zip(self.spec.widths[:-1], self.spec.widths[1:]):
            offsets.append((off, a * b, b))
            off += a * b + b
        g = np.asarray(grad_out, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            g = g * _act_grad(self.spec.activations[i], zs[i], ys[i + 1])
            h = ys[i]
            o, nw, nb = offsets[i]
            grad[o:o + nw] = (h.T @ g if g.ndim > 1 else np.outer(h, g)).ravel()
            grad[o + nw:o + nw + nb] = g.sum(axis=0) if g.ndim > 1 else g
            if i:
                g = g @ self.weights[i].T
        return grad

    def input_grad(self, cache, grad_out: np.ndarray) -> np.ndarray:
        zs, ys = cache
        g = np.asarray(grad_out, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            g = g * _act_grad(self.spec.activations[i], zs[i], ys[i + 1])
            g = g @ self.weights[i].T
        return g
