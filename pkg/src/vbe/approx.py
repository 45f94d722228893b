"""Feature maps, a small ReLU network with hand-written backprop, and optimizers.

Every action-value approximator in the package is an :class:`MLP` sitting on
top of a :class:`FeatureMap`. A tabular learner is an MLP with no hidden layer
and no bias over one-hot features; a tile-coded linear learner is the same with
tile features.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractViolation, InvalidParameter


# ---------------------------------------------------------------------------
# Feature maps
# ---------------------------------------------------------------------------


def one_hot(state_index: int, dim: int) -> np.ndarray:
    if not 0 <= state_index < dim:
        raise InvalidParameter(f"state index {state_index} out of range for dim {dim}")
    out = np.zeros(dim)
    out[state_index] = 1.0
    return out


def triangle_index(row, col, grid_size: int):
    """Flatten a Deepsea (row, col) pair with col <= row into [0, N(N+1)/2).

    Rows past the last one (the absorbing terminal row) are folded onto the
    last row; their features are always multiplied by a zero discount.
    """
    row = np.minimum(np.asarray(row, dtype=np.int64), grid_size - 1)
    col = np.clip(np.asarray(col, dtype=np.int64), 0, row)
    return row * (row + 1) // 2 + col


@dataclass(frozen=True)
class ActiveFeatures:
    """Binary features stored as the active indices of each row, shape (batch, nnz)."""

    idx: np.ndarray
    n: int

    def __len__(self) -> int:
        return len(self.idx)

    def dense(self) -> np.ndarray:
        out = np.zeros((len(self.idx), self.n))
        np.put_along_axis(out, self.idx, 1.0, axis=1)
        return out


@dataclass(frozen=True)
class FeatureMap:
    """Maps raw observations to dense feature vectors.

    ``one_hot`` accepts either a 1-d observation holding an integer index or a
    2-d Deepsea (row, col) observation. ``tile_code`` uses ``tilings`` grids of
    ``tiles`` cells per dimension over the box ``[low, high]``. ``identity``
    rescales the box to the unit cube.
    """

    kind: str
    input_dim: int
    output_dim: int
    low: tuple[float, ...] = ()
    high: tuple[float, ...] = ()
    tiles: int = 0
    tilings: int = 0
    grid_size: int = 0

    def __post_init__(self):
        if self.kind not in ("one_hot", "tile_code", "identity"):
            raise InvalidParameter(f"unknown feature kind {self.kind!r}")
        if self.kind == "tile_code":
            if self.tiles < 2 or self.tilings < 1:
                raise InvalidParameter("tile coding needs tiles >= 2 and tilings >= 1")
            if len(self.low) != self.input_dim or len(self.high) != self.input_dim:
                raise InvalidParameter("tile coding needs a box matching input_dim")
        if self.kind == "identity" and self.output_dim != self.input_dim:
            raise InvalidParameter("identity features keep the input dimension")

    @classmethod
    def deepsea(cls, grid_size: int) -> "FeatureMap":
        return cls("one_hot", 2, grid_size * (grid_size + 1) // 2, grid_size=grid_size)

    @classmethod
    def indices(cls, n: int) -> "FeatureMap":
        return cls("one_hot", 1, n)

    @property
    def n_cells(self) -> int:
        return self.tiles**self.input_dim * self.tilings

    def index(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        if self.input_dim == 2 and self.grid_size:
            row = obs[:, 0].astype(np.int64)
            np.minimum(row, self.grid_size - 1, out=row)
            col = np.minimum(obs[:, 1].astype(np.int64), row)
            return row * (row + 1) // 2 + col
        idx = obs[:, 0].astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= self.output_dim):
            raise InvalidParameter("one-hot index out of range")
        return idx

    @cached_property
    def _tile_consts(self):
        low = np.asarray(self.low, dtype=float)
        span = np.asarray(self.high, dtype=float) - low
        # Tile width is 1/(tiles-1) of the box so offsets never spill past `tiles` cells.
        offsets = (np.arange(self.tilings) / self.tilings)[None, :, None]
        strides = self.tiles ** np.arange(self.input_dim - 1, -1, -1)
        base = np.arange(self.tilings)[None, :] * self.tiles**self.input_dim
        return low, span, offsets, strides, base

    def active_tiles(self, obs: np.ndarray) -> np.ndarray:
        """Indices of the active tile in every tiling, shape (batch, tilings)."""
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        low, span, offsets, strides, base = self._tile_consts
        u = np.clip((obs - low) / span, 0.0, 1.0)
        cells = (u[:, None, :] * (self.tiles - 1) + offsets).astype(np.int64)
        np.minimum(cells, self.tiles - 1, out=cells)
        return (cells @ strides + base) % self.output_dim

    def compact(self, obs) -> np.ndarray:
        """Cheap-to-store encoding of a batch: indices, uint8 tile rows, or floats."""
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        if obs.shape[1] != self.input_dim:
            raise InvalidParameter(f"observation has dim {obs.shape[1]}, expected {self.input_dim}")
        if self.kind == "one_hot":
            return self.index(obs)
        if self.kind == "identity":
            return self(obs)
        out = np.zeros((obs.shape[0], self.output_dim), dtype=np.uint8)
        np.put_along_axis(out, self.active_tiles(obs), 1, axis=1)
        return out

    def expand(self, compact: np.ndarray):
        """Network input from :meth:`compact` rows."""
        if self.kind == "one_hot":
            return ActiveFeatures(compact[:, None], self.output_dim)
        return compact.astype(float)

    def encode(self, obs):
        """Batched features in the cheapest form for the networks.

        One-hot maps return :class:`ActiveFeatures` (a row gather per layer);
        tile codes return the dense 0/1 matrix, since a matmul against it is
        much faster than gathering and summing one row per tiling.
        """
        return self.expand(self.compact(obs))

    def __call__(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        single = obs.ndim == 1
        batch = np.atleast_2d(obs)
        if batch.shape[1] != self.input_dim:
            raise InvalidParameter(
                f"observation has dim {batch.shape[1]}, expected {self.input_dim}"
            )
        if self.kind == "identity":
            if self.low:
                low = np.asarray(self.low)
                out = (batch - low) / (np.asarray(self.high) - low)
            else:
                out = batch.copy()
        else:
            out = np.zeros((batch.shape[0], self.output_dim))
            rows = np.arange(batch.shape[0])
            if self.kind == "one_hot":
                out[rows, self.index(batch)] = 1.0
            else:
                out[rows[:, None], self.active_tiles(batch)] = 1.0
        return out[0] if single else out


def tile_code(obs, fmap: FeatureMap) -> np.ndarray:
    if fmap.kind != "tile_code":
        raise InvalidParameter("tile_code needs a tile_code feature map")
    return fmap(obs)


def tile_map(low: Sequence[float], high: Sequence[float], tiles: int, tilings: int,
             features: int | None = None) -> FeatureMap:
    n = tiles ** len(low) * tilings
    return FeatureMap("tile_code", len(low), features or n, tuple(map(float, low)),
                      tuple(map(float, high)), tiles, tilings)


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


class MLP:
    """Fully connected ReLU network with a linear output layer.

    ``sizes`` lists every layer width, input first. ``sizes=[n, A]`` gives a
    linear model. Parameters are exposed as a flat list ``[W0, b0, W1, b1, ...]``
    (biases omitted when ``bias=False``) that optimizers update in place.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator | None = None,
                 init: str = "default", bias: bool = True):
        if len(sizes) < 2:
            raise InvalidParameter("an MLP needs at least input and output sizes")
        self.sizes = list(sizes)
        self.bias = bias
        rng = rng if rng is not None else np.random.default_rng()
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if init == "default":
                bound = 1.0 / math.sqrt(fan_in)
                self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
                if bias:
                    self.biases.append(rng.uniform(-bound, bound, fan_out))
            elif init == "gaussian_over_n":
                self.weights.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, fan_out)))
                if bias:
                    self.biases.append(np.zeros(fan_out))
            elif init == "zeros":
                self.weights.append(np.zeros((fan_in, fan_out)))
                if bias:
                    self.biases.append(np.zeros(fan_out))
            else:
                raise InvalidParameter(f"unknown init scheme {init!r}")
        self._cache: list[np.ndarray] | None = None

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    @property
    def params(self) -> list[np.ndarray]:
        if not self.bias:
            return list(self.weights)
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def _first(self, x) -> np.ndarray:
        w = self.weights[0]
        if isinstance(x, ActiveFeatures):
            if x.n != self.n_in:
                raise InvalidParameter(f"input has dim {x.n}, expected {self.n_in}")
            idx = x.idx
            return w[idx[:, 0]] if idx.shape[1] == 1 else x.dense() @ w
        return x @ w

    def __call__(self, x) -> np.ndarray:
        """Forward pass without touching the backprop cache."""
        h = x
        last = len(self.weights) - 1
        for i, w in enumerate(self.weights):
            h = self._first(h) if i == 0 else h @ w
            if self.bias:
                h = h + self.biases[i]
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def forward(self, x) -> np.ndarray:
        single = False
        if not isinstance(x, ActiveFeatures):
            x = np.asarray(x, dtype=float)
            if x.shape[-1] != self.n_in:
                raise InvalidParameter(f"input has dim {x.shape[-1]}, expected {self.n_in}")
            single = x.ndim == 1
            x = np.atleast_2d(x)
        h = x
        cache = [h]
        last = len(self.weights) - 1
        for i, w in enumerate(self.weights):
            h = self._first(h) if i == 0 else h @ w
            if self.bias:
                h = h + self.biases[i]
            if i < last:
                h = np.maximum(h, 0.0)
            cache.append(h)
        self._cache = cache
        return h[0] if single else h

    def backward(self, output_grad: np.ndarray) -> list[np.ndarray]:
        """Gradients of ``sum(output_grad * forward(x))`` for the cached input."""
        if self._cache is None:
            raise ContractViolation("backward called without a cached forward pass")
        acts = self._cache
        g = np.atleast_2d(np.asarray(output_grad, dtype=float))
        if g.shape != acts[-1].shape:
            raise InvalidParameter("output gradient shape does not match the cached output")
        n = len(self.weights)
        gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        for i in range(n - 1, -1, -1):
            if i == 0 and isinstance(acts[0], ActiveFeatures):
                gw[0] = _scatter_rows(acts[0], g)
            else:
                gw[i] = acts[i].T @ g
            if self.bias:
                gb[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0.0)
        if not self.bias:
            return gw
        out = []
        for w, b in zip(gw, gb):
            out += [w, b]
        return out

    def copy(self) -> "MLP":
        other = MLP.__new__(MLP)
        other.sizes = list(self.sizes)
        other.bias = self.bias
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other._cache = None
        return other

    def load_from(self, other: "MLP") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def flat(self) -> np.ndarray:
        """Layer-major, row-major float64 dump of every parameter."""
        return np.concatenate([p.ravel() for p in self.params]).astype(np.float64)

    def dump(self, path) -> None:
        self.flat().tofile(Path(path))


def _scatter_rows(x: ActiveFeatures, g: np.ndarray) -> np.ndarray:
    """``dense(x).T @ g``; builds no dense matrix in the one-hot case."""
    if x.idx.shape[1] != 1:
        return x.dense().T @ g
    out = np.zeros((x.n, g.shape[1]))
    np.add.at(out, x.idx[:, 0], g)
    return out


class LinearStack:
    """Evaluates k single-layer networks at once.

    The members' parameters are moved into shared ``(k, n, A)`` arrays and
    each member keeps a view of its slice, so per-member training still
    works. Build the stack before creating any optimizer for the members.
    """

    def __init__(self, nets: Sequence[MLP]):
        if any(len(n.weights) != 1 for n in nets):
            raise InvalidParameter("LinearStack only holds single-layer networks")
        self.w = np.stack([n.weights[0] for n in nets])
        self.b = np.stack([n.biases[0] for n in nets]) if nets[0].bias else None
        for i, n in enumerate(nets):
            n.weights[0] = self.w[i]
            if self.b is not None:
                n.biases[0] = self.b[i]

    def __call__(self, x) -> np.ndarray:
        """Outputs of every member, shape (k, batch, A)."""
        if isinstance(x, ActiveFeatures) and x.idx.shape[1] == 1:
            out = self.w[:, x.idx[:, 0]]
        else:
            dense = x.dense() if isinstance(x, ActiveFeatures) else np.atleast_2d(x)
            out = np.matmul(dense, self.w)
        if self.b is not None:
            out = out + self.b[:, None, :]
        return out


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


@dataclass
class SGD:
    params: list[np.ndarray]
    lr: float = 0.001

    def step(self, grads: Sequence[np.ndarray]) -> None:
        _check_shapes(self.params, grads)
        for p, g in zip(self.params, grads):
            p -= self.lr * g


@dataclass
class Adam:
    params: list[np.ndarray]
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        _check_shapes(self.params, grads)
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p -= (self.lr / c1) * m / denom


def make_optimizer(kind: str, params: list[np.ndarray], lr: float):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return SGD(params, lr)
    raise InvalidParameter(f"unknown optimizer {kind!r}")


def _check_shapes(params, grads) -> None:
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise InvalidParameter("gradient shapes do not match parameter shapes")


def finite_difference_grads(net: MLP, x: np.ndarray, output_grad: np.ndarray,
                            eps: float = 1e-5) -> list[np.ndarray]:
    """Central differences of ``sum(output_grad * net(x))`` w.r.t. every parameter."""
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + eps
            up = np.sum(output_grad * net(x))
            p[idx] = old - eps
            down = np.sum(output_grad * net(x))
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def gradient_rel_error(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> float:
    va = np.concatenate([x.ravel() for x in a])
    vb = np.concatenate([x.ravel() for x in b])
    scale = max(np.linalg.norm(va), np.linalg.norm(vb), 1e-12)
    return float(np.linalg.norm(va - vb) / scale)
