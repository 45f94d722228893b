"""Base learner pieces: replay, target networks, Double DQN, behavior policies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approx import MLP, FeatureMap, make_optimizer
from .errors import CannotSample, InvalidParameter

TARGET_POLICY_MODES = ("greedy", "optimistic")


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    discount: float


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    discount: np.ndarray
    phi: object = None
    phi_next: object = None

    def __len__(self) -> int:
        return len(self.a)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling.

    With a ``features`` map the buffer also stores each observation's compact
    encoding when it is added, and sampled batches carry network-ready
    ``phi`` / ``phi_next``.
    """

    def __init__(self, capacity: int = 50_000, obs_dim: int = 1,
                 features: FeatureMap | None = None):
        if capacity < 1:
            raise InvalidParameter("capacity must be >= 1")
        self.capacity = capacity
        self.features = features
        self.s = np.zeros((capacity, obs_dim))
        self.s_next = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.discount = np.zeros(capacity)
        self.size = 0
        self._next = 0
        self._phi = self._phi_next = None
        self._last = None

    def __len__(self) -> int:
        return self.size

    def _encode(self, obs: np.ndarray) -> np.ndarray:
        # Consecutive transitions share s_next -> s, so remember the last encoding.
        if self._last is not None and np.array_equal(self._last[0], obs):
            return self._last[1]
        row = self.features.compact(obs)[0]
        self._last = (np.array(obs, dtype=float), row)
        return row

    def add(self, t: Transition) -> None:
        i = self._next
        self.s[i] = t.s
        self.a[i] = t.a
        self.r[i] = t.r
        self.s_next[i] = t.s_next
        self.discount[i] = t.discount
        if self.features is not None:
            phi, phi_next = self._encode(t.s), self._encode(t.s_next)
            if self._phi is None:
                shape = (self.capacity,) + np.shape(phi)
                self._phi = np.zeros(shape, dtype=np.asarray(phi).dtype)
                self._phi_next = np.zeros(shape, dtype=np.asarray(phi).dtype)
            self._phi[i] = phi
            self._phi_next[i] = phi_next
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, m: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise CannotSample("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=m)
        return self._take(idx)

    def _take(self, idx) -> Batch:
        b = Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.discount[idx])
        if self.features is not None:
            b.phi = self.features.expand(self._phi[idx])
            b.phi_next = self.features.expand(self._phi_next[idx])
        return b

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        start = self._next if self.size == self.capacity else 0
        order = [(start + j) % self.capacity for j in range(self.size)]
        return [Transition(self.s[i].copy(), int(self.a[i]), float(self.r[i]),
                           self.s_next[i].copy(), float(self.discount[i])) for i in order]


buffer_add = ReplayBuffer.add
buffer_sample = ReplayBuffer.sample


@dataclass
class AgentConfig:
    k: int = 1
    c: float = 1.0
    tau: int = 4
    batch_size: int = 128
    learning_rate: float = 0.001
    discount: float = 0.99
    target_policy: str = "greedy"
    epsilon: float = 0.1
    buffer_size: int = 50_000
    optimizer: str = "adam"
    hidden: tuple = (50, 50)
    rnd_embedding: int = 64
    head_resample_steps: int = 100
    value_init: str = "default"

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if self.k < 1:
            raise InvalidParameter("ensemble size k must be >= 1")
        if self.c < 0:
            raise InvalidParameter("bonus scale c must be >= 0")
        if self.tau < 1 or self.batch_size < 1:
            raise InvalidParameter("tau and batch_size must be >= 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidParameter("epsilon must lie in [0, 1]")
        if self.value_init not in ("default", "zeros", "gaussian_over_n"):
            raise InvalidParameter("value_init must be default, zeros or gaussian_over_n")
        if self.target_policy not in TARGET_POLICY_MODES:
            raise InvalidParameter(f"target_policy must be one of {TARGET_POLICY_MODES}")


# ---------------------------------------------------------------------------
# Action selection
# ---------------------------------------------------------------------------


def argmax_random(values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise argmax with ties broken uniformly at random."""
    values = np.atleast_2d(values)
    ties = values == values.max(axis=1, keepdims=True)
    if ties.sum() == len(values):
        return values.argmax(axis=1)
    return np.argmax(ties * rng.random(values.shape), axis=1)


def select_action_optimistic(q_values: np.ndarray, bonus: np.ndarray, c: float,
                             rng: np.random.Generator) -> int:
    if c < 0:
        raise InvalidParameter("bonus scale c must be >= 0")
    return int(argmax_random(np.asarray(q_values) + c * np.asarray(bonus), rng)[0])


def select_action_epsgreedy(q_values: np.ndarray, epsilon: float,
                            rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidParameter("epsilon must lie in [0, 1]")
    q_values = np.asarray(q_values)
    if rng.random() < epsilon:
        return int(rng.integers(q_values.shape[-1]))
    return int(argmax_random(q_values, rng)[0])


# ---------------------------------------------------------------------------
# Double DQN
# ---------------------------------------------------------------------------


def ddqn_target(live_next: np.ndarray, frozen_next: np.ndarray, r, discount,
                rng: np.random.Generator, select: np.ndarray | None = None) -> np.ndarray:
    """``r + discount * frozen(s', argmax_a live(s', a))`` for a batch.

    ``select`` overrides the values used for the argmax (optimistic target
    policies pass ``q + c*b`` here); the frozen values still do the evaluation.
    """
    live_next = np.atleast_2d(live_next)
    frozen_next = np.atleast_2d(frozen_next)
    chooser = live_next if select is None else np.atleast_2d(select)
    a_star = argmax_random(chooser, rng)
    boot = frozen_next[np.arange(len(a_star)), a_star]
    return np.asarray(r, dtype=float) + np.asarray(discount, dtype=float) * boot


def td_step(net: MLP, opt, phi: np.ndarray, actions: np.ndarray, targets: np.ndarray,
            scale: float = 0.5) -> float:
    """One optimizer step on ``scale * mean((target - net(phi)[a])**2)``.

    Only the taken action's output gets gradient. The default scale makes a
    single-sample SGD step move the prediction by exactly ``lr * delta``.
    Returns the loss before the step.
    """
    out = net.forward(phi)
    rows = np.arange(len(actions))
    delta = targets - out[rows, actions]
    g = np.zeros_like(out)
    g[rows, actions] = -2.0 * scale * delta / len(actions)
    opt.step(net.backward(g))
    return float(scale * np.mean(delta**2))


class QLearner:
    """A live network, its frozen copy and its optimizer, over shared features."""

    def __init__(self, net: MLP, cfg: AgentConfig):
        self.net = net
        self.frozen = net.copy()
        self.opt = make_optimizer(cfg.optimizer, net.params, cfg.learning_rate)

    def sync(self) -> None:
        self.frozen.load_from(self.net)


def ddqn_update(learner: QLearner, phi: np.ndarray, a: np.ndarray, r: np.ndarray,
                phi_next: np.ndarray, discount: np.ndarray, rng: np.random.Generator,
                select: np.ndarray | None = None) -> float:
    """Double DQN step on a featurized batch; returns the loss."""
    targets = ddqn_target(learner.net(phi_next), learner.frozen(phi_next), r, discount, rng, select)
    return td_step(learner.net, learner.opt, phi, a, targets)


def make_net(regime: str, features: FeatureMap, n_actions: int, rng: np.random.Generator,
             cfg: AgentConfig, n_out: int | None = None, init: str = "default") -> MLP:
    """Network for a feature regime: ``tabular`` (no bias), ``tile_linear`` or ``mlp``."""
    n_out = n_actions if n_out is None else n_out
    if regime == "tabular":
        return MLP([features.output_dim, n_out], rng, init=init, bias=False)
    if regime == "tile_linear":
        return MLP([features.output_dim, n_out], rng, init=init, bias=True)
    if regime == "mlp":
        return MLP([features.output_dim, *cfg.hidden, n_out], rng, init=init, bias=True)
    raise InvalidParameter(f"unknown feature regime {regime!r}")
