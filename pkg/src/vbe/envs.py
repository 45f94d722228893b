"""Classic exploration environments with transition-based discounting.

Every step returns an :class:`EnvStep` whose ``discount`` is 0 exactly when
the episode terminated. Agents multiply this by their own discount factor.
The step functions are pure (state in, state out); the small classes wrap
them with the state and random stream a training loop needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractViolation, InvalidParameter


@dataclass(frozen=True)
class EnvStep:
    reward: float
    next_obs: np.ndarray
    discount: float
    terminal: bool


def _step(reward, obs, terminal) -> EnvStep:
    return EnvStep(float(reward), np.asarray(obs, dtype=float), 0.0 if terminal else 1.0, terminal)


# ---------------------------------------------------------------------------
# Deepsea
# ---------------------------------------------------------------------------

LEFT, RIGHT = 0, 1


@dataclass(frozen=True)
class DeepseaState:
    row: int
    col: int
    grid_size: int

    @property
    def obs(self) -> np.ndarray:
        return np.array([self.row, self.col], dtype=float)

    @property
    def terminal(self) -> bool:
        return self.row >= self.grid_size


def deepsea_reset(grid_size: int) -> DeepseaState:
    if grid_size < 1:
        raise InvalidParameter("grid_size must be >= 1")
    return DeepseaState(0, 0, grid_size)


def deepsea_n_states(grid_size: int) -> int:
    return grid_size * (grid_size + 1) // 2


def deepsea_step(state: DeepseaState, action: int, reward_free: bool = False):
    """Returns ``(next_state, EnvStep)``."""
    n = state.grid_size
    if state.terminal:
        raise ContractViolation("stepping a terminal Deepsea state")
    if action not in (LEFT, RIGHT):
        raise InvalidParameter(f"Deepsea action must be 0 or 1, got {action}")
    if action == RIGHT:
        reward = 1.0 if (state.row == n - 1 and state.col == n - 1) else -0.01 / n
        col = min(state.col + 1, n - 1)
    else:
        reward = 0.0
        col = max(state.col - 1, 0)
    if reward_free:
        reward = 0.0
    nxt = DeepseaState(state.row + 1, col, n)
    return nxt, _step(reward, nxt.obs, nxt.terminal)


# ---------------------------------------------------------------------------
# River Swim (continuous, observation flipped so the big reward is at 0)
# ---------------------------------------------------------------------------

UP, DOWN = 0, 1


@dataclass(frozen=True)
class RiverSwimParams:
    step_mean: float = 0.1
    step_std: float = 0.01
    p_switch: float = 0.3
    upstream_band: float = 0.05
    downstream_band: float = 0.95
    upstream_reward: float = 1.0
    downstream_reward: float = 0.005


def riverswim_reset(rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.uniform(0.9, 1.0)])


def riverswim_step(state: np.ndarray, action: int, rng: np.random.Generator,
                   params: RiverSwimParams = RiverSwimParams()):
    x = float(state[0])
    if action not in (UP, DOWN):
        raise InvalidParameter(f"River Swim action must be 0 or 1, got {action}")
    # Both draws happen every step so the random stream does not depend on the action.
    zeta = rng.normal(0.0, params.step_std) if params.step_std > 0 else 0.0
    switched = rng.random() < params.p_switch
    applied = DOWN if (action == UP and switched) else action
    reward = 0.0
    if applied == UP and x <= params.upstream_band:
        reward = params.upstream_reward
    elif applied == DOWN and x >= params.downstream_band:
        reward = params.downstream_reward
    move = params.step_mean + zeta
    x_next = x - move if applied == UP else x + move
    x_next = min(max(x_next, 0.0), 1.0)
    nxt = np.array([x_next])
    return nxt, _step(reward, nxt, False)


# ---------------------------------------------------------------------------
# Puddle World
# ---------------------------------------------------------------------------

PW_UP, PW_DOWN, PW_LEFT, PW_RIGHT = 0, 1, 2, 3
_PW_DIRS = np.array([[0.0, 1.0], [0.0, -1.0], [-1.0, 0.0], [1.0, 0.0]])


@dataclass(frozen=True)
class PuddleWorldParams:
    step_mean: float = 0.005
    step_std: float = 0.1
    step_reward: float = -1.0
    puddle_scale: float = 400.0
    radius: float = 0.1
    goal: float = 0.95
    puddles: tuple = (((0.45, 0.4), (0.45, 0.8)), ((0.1, 0.75), (0.45, 0.75)))


def _segment_distance(p: np.ndarray, a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def puddle_penalty(pos: np.ndarray, params: PuddleWorldParams = PuddleWorldParams()) -> float:
    """Nonpositive penalty, largest in magnitude on a puddle's center line."""
    d = min(_segment_distance(np.asarray(pos, dtype=float), a, b) for a, b in params.puddles)
    if d >= params.radius:
        return 0.0
    return -params.puddle_scale * (params.radius - d)


def puddleworld_reset(rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.uniform(0.1, 0.3), rng.uniform(0.45, 0.65)])


def puddleworld_step(state: np.ndarray, action: int, rng: np.random.Generator,
                     params: PuddleWorldParams = PuddleWorldParams()):
    if not 0 <= action < 4:
        raise InvalidParameter(f"Puddle World action must be in 0..3, got {action}")
    zeta = rng.normal(0.0, params.step_std) if params.step_std > 0 else 0.0
    nxt = np.clip(np.asarray(state, dtype=float) + (params.step_mean + zeta) * _PW_DIRS[action],
                  0.0, 1.0)
    reward = params.step_reward + puddle_penalty(nxt, params)
    done = bool(nxt[0] >= params.goal and nxt[1] >= params.goal)
    return nxt, _step(reward, nxt, done)


# ---------------------------------------------------------------------------
# Sparse Mountain Car
# ---------------------------------------------------------------------------

MC_POS = (-1.2, 0.6)
MC_VEL = (-0.07, 0.07)
MC_GOAL = 0.5


def mountaincar_reset(rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.uniform(-0.6, -0.4), 0.0])


def mountaincar_step(state: np.ndarray, action: int):
    if action not in (0, 1, 2):
        raise InvalidParameter(f"Mountain Car action must be 0, 1 or 2, got {action}")
    pos, vel = float(state[0]), float(state[1])
    vel += 0.001 * (action - 1) - 0.0025 * math.cos(3 * pos)
    vel = min(max(vel, MC_VEL[0]), MC_VEL[1])
    pos += vel
    pos = min(max(pos, MC_POS[0]), MC_POS[1])
    if pos == MC_POS[0] and vel < 0:
        vel = 0.0
    done = pos >= MC_GOAL
    nxt = np.array([pos, vel])
    return nxt, _step(1.0 if done else 0.0, nxt, done)


# ---------------------------------------------------------------------------
# Stateful wrappers
# ---------------------------------------------------------------------------


class Env:
    name: str
    n_actions: int
    obs_dim: int
    low: tuple
    high: tuple
    episodic: bool = True
    max_steps: int | None = None

    def reset(self) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: int) -> EnvStep:
        raise NotImplementedError


class DeepSea(Env):
    n_actions = 2
    obs_dim = 2

    def __init__(self, grid_size: int = 10, reward_free: bool = False, rng=None):
        self.state = deepsea_reset(grid_size)
        self.grid_size = grid_size
        self.reward_free = reward_free
        self.name = "deepsea_pure" if reward_free else "deepsea"
        self.low = (0.0, 0.0)
        self.high = (float(grid_size - 1), float(grid_size - 1))
        self.max_steps = grid_size

    @property
    def n_states(self) -> int:
        return deepsea_n_states(self.grid_size)

    def reset(self) -> np.ndarray:
        self.state = deepsea_reset(self.grid_size)
        return self.state.obs

    def step(self, action: int) -> EnvStep:
        self.state, out = deepsea_step(self.state, action, self.reward_free)
        return out


class RiverSwim(Env):
    name = "riverswim"
    n_actions = 2
    obs_dim = 1
    low = (0.0,)
    high = (1.0,)
    episodic = False

    def __init__(self, rng: np.random.Generator, params: RiverSwimParams = RiverSwimParams()):
        self.rng = rng
        self.params = params
        self.state = riverswim_reset(rng)

    def reset(self) -> np.ndarray:
        self.state = riverswim_reset(self.rng)
        return self.state.copy()

    def step(self, action: int) -> EnvStep:
        self.state, out = riverswim_step(self.state, action, self.rng, self.params)
        return out


class PuddleWorld(Env):
    name = "puddleworld"
    n_actions = 4
    obs_dim = 2
    low = (0.0, 0.0)
    high = (1.0, 1.0)

    def __init__(self, rng: np.random.Generator, params: PuddleWorldParams = PuddleWorldParams(),
                 max_steps: int = 1000):
        self.rng = rng
        self.params = params
        self.max_steps = max_steps
        self.state = puddleworld_reset(rng)

    def reset(self) -> np.ndarray:
        self.state = puddleworld_reset(self.rng)
        return self.state.copy()

    def step(self, action: int) -> EnvStep:
        self.state, out = puddleworld_step(self.state, action, self.rng, self.params)
        return out


class MountainCar(Env):
    name = "mountaincar_sparse"
    n_actions = 3
    obs_dim = 2
    low = (MC_POS[0], MC_VEL[0])
    high = (MC_POS[1], MC_VEL[1])

    def __init__(self, rng: np.random.Generator, max_steps: int = 1000):
        self.rng = rng
        self.max_steps = max_steps
        self.state = mountaincar_reset(rng)

    def reset(self) -> np.ndarray:
        self.state = mountaincar_reset(self.rng)
        return self.state.copy()

    def step(self, action: int) -> EnvStep:
        self.state, out = mountaincar_step(self.state, action)
        return out


ENV_NAMES = ("deepsea", "deepsea_pure", "riverswim", "puddleworld", "mountaincar_sparse")

ENV_PARAMS = {
    "deepsea": {"grid_size"},
    "deepsea_pure": {"grid_size"},
    "riverswim": set(RiverSwimParams.__dataclass_fields__),
    "puddleworld": set(PuddleWorldParams.__dataclass_fields__) | {"max_steps"},
    "mountaincar_sparse": {"max_steps"},
}


def make_env(name: str, rng: np.random.Generator, **params) -> Env:
    """Build an environment from its config string and per-env parameters."""
    if name not in ENV_PARAMS:
        raise InvalidParameter(f"unknown environment {name!r}")
    unknown = sorted(set(params) - ENV_PARAMS[name])
    if unknown:
        raise InvalidParameter(f"unknown parameter {unknown[0]!r} for environment {name!r}")
    params = dict(params)
    if name in ("deepsea", "deepsea_pure"):
        return DeepSea(int(params.pop("grid_size", 10)), reward_free=(name == "deepsea_pure"))
    if name == "riverswim":
        return RiverSwim(rng, replace(RiverSwimParams(), **params))
    if name == "puddleworld":
        max_steps = int(params.pop("max_steps", 1000))
        return PuddleWorld(rng, replace(PuddleWorldParams(), **params), max_steps)
    return MountainCar(rng, int(params.pop("max_steps", 1000)))
