"""Experiment configs, seeded runs, sweeps, coverage tracking and CSV logs."""
from __future__ import annotations

import csv
import itertools
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .approx import FeatureMap, tile_map
from .core import AgentConfig, Transition
from .envs import ENV_NAMES, ENV_PARAMS, DeepSea, Env, make_env
from .errors import ConfigError, InvalidParameter
from .explore import AGENT_NAMES, make_agent

REGIMES = ("tabular", "tile_linear", "mlp")

METRIC_BY_ENV = {
    "deepsea": "return_undiscounted",
    "deepsea_pure": "coverage",
    "riverswim": "cumulative_reward",
    "puddleworld": "return_undiscounted",
    "mountaincar_sparse": "return_discounted",
}

# (tiles, tilings, features) per environment for the tile-coded linear regime.
TILE_DEFAULTS = {
    "riverswim": (4, 32, 128),
    "puddleworld": (5, 5, 128),
    "mountaincar_sparse": (4, 16, 512),
}

CSV_HEADER = ("run", "seed", "step", "episode", "metric", "coverage")
STREAMS = ("env", "init", "agent")


@dataclass
class ExperimentConfig:
    env: str = "deepsea"
    env_params: dict = field(default_factory=dict)
    agent: str = "vbe"
    agent_cfg: AgentConfig = field(default_factory=AgentConfig)
    regime: str = "tabular"
    steps: int | None = None
    episodes: int | None = None
    runs: int = 1
    seed: int = 0
    metric: str | None = None
    log_every: int = 100
    stop_when_covered: bool = False
    tiles: int | None = None
    tilings: int | None = None
    features: int | None = None
    out: str | None = None

    def __post_init__(self):
        if self.env not in ENV_NAMES:
            raise ConfigError(f"env.name: unknown environment {self.env!r}")
        unknown = sorted(set(self.env_params) - ENV_PARAMS[self.env])
        if unknown:
            raise ConfigError(f"env.{unknown[0]}: unknown parameter for {self.env}")
        if self.agent not in AGENT_NAMES:
            raise ConfigError(f"agent.name: unknown agent {self.agent!r}")
        if self.regime not in REGIMES:
            raise ConfigError(f"training.regime: unknown feature regime {self.regime!r}")
        if self.regime == "tabular" and not self.env.startswith("deepsea"):
            raise ConfigError("training.regime: tabular features need a Deepsea environment")
        expected = METRIC_BY_ENV[self.env]
        if self.metric is None:
            self.metric = expected
        elif self.metric != expected:
            raise ConfigError(f"logging.metric: {self.env} reports {expected}, not {self.metric}")
        if (self.steps is None) == (self.episodes is None):
            raise ConfigError("training.steps: give exactly one of steps or episodes")
        if self.runs < 1:
            raise ConfigError("training.runs: need at least one run")

    @property
    def episodic(self) -> bool:
        return self.env != "riverswim"

    def with_agent(self, **changes) -> "ExperimentConfig":
        return replace(self, agent_cfg=replace(self.agent_cfg, **changes))


def agent_defaults(env: str, agent: str) -> dict:
    """Per-environment AgentConfig values that differ from the global defaults.

    VBE, VBE-SL, ACB and RND sync target networks every 64 steps on Deepsea
    and every 4 elsewhere; BDQN and DQN-P always use 4.
    """
    if env.startswith("deepsea") and agent in ("vbe", "vbe_sl", "acb", "rnd"):
        return {"tau": 64}
    return {}


_SECTION_KEYS = {
    "env": {"name"},
    "agent": {"name"} | {f.name for f in fields(AgentConfig)},
    "training": {"regime", "steps", "episodes", "runs", "seed", "stop_when_covered",
                 "tiles", "tilings", "features"},
    "logging": {"metric", "log_every", "out"},
}


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from the nested mapping of a TOML config file."""
    for section in raw:
        if section not in _SECTION_KEYS:
            raise ConfigError(f"{section}: unknown config section")
    env = dict(raw.get("env", {}))
    agent = dict(raw.get("agent", {}))
    training = dict(raw.get("training", {}))
    logging = dict(raw.get("logging", {}))
    for name, section in (("agent", agent), ("training", training), ("logging", logging)):
        for key in section:
            if key not in _SECTION_KEYS[name]:
                raise ConfigError(f"{name}.{key}: unknown config key")
    env_name = env.pop("name", "deepsea")
    agent_name = agent.pop("name", "vbe")
    agent = {**agent_defaults(env_name, agent_name), **agent}
    try:
        agent_cfg = AgentConfig(**agent)
    except InvalidParameter as err:
        raise ConfigError(f"agent: {err}") from err
    return ExperimentConfig(env=env_name, env_params=env, agent=agent_name, agent_cfg=agent_cfg,
                            **training, **logging)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh))


def make_features(env: Env, cfg: ExperimentConfig) -> FeatureMap:
    if isinstance(env, DeepSea):
        return FeatureMap.deepsea(env.grid_size)
    if cfg.regime == "tile_linear":
        tiles, tilings, n = TILE_DEFAULTS[cfg.env]
        return tile_map(env.low, env.high, cfg.tiles or tiles, cfg.tilings or tilings,
                        cfg.features or n)
    return FeatureMap("identity", env.obs_dim, env.obs_dim, env.low, env.high)


def make_streams(seed: int, run: int) -> dict[str, np.random.Generator]:
    """Independent generators keyed by (seed, run, component)."""
    return {name: np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run, i))))
            for i, name in enumerate(STREAMS)}


# ---------------------------------------------------------------------------
# Logs
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    run: int
    seed: int
    step: int
    episode: int
    metric: float
    coverage: int
    wall: float = 0.0


@dataclass
class RunLog:
    records: list[RunRecord] = field(default_factory=list)

    def append(self, record: RunRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def metrics(self) -> np.ndarray:
        return np.array([r.metric for r in self.records])

    def final_window_mean(self, frac: float = 0.1) -> float:
        m = self.metrics()
        if len(m) == 0:
            return float("nan")
        return float(m[-max(1, int(round(frac * len(m)))):].mean())

    def area_under_curve(self) -> float:
        m = self.metrics()
        return float(m.mean()) if len(m) else float("nan")

    @property
    def final_coverage(self) -> int:
        return self.records[-1].coverage if self.records else 0


class CoverageTracker:
    """Distinct Deepsea cells visited, counted per episode."""

    def __init__(self, grid_size: int):
        self.grid_size = grid_size
        self.visited: set[tuple[int, int]] = set()

    @property
    def ceiling(self) -> int:
        return self.grid_size * (self.grid_size + 1) // 2

    def visit(self, obs) -> None:
        row, col = int(obs[0]), int(obs[1])
        if row < self.grid_size:
            self.visited.add((row, col))

    @property
    def count(self) -> int:
        return len(self.visited)

    @property
    def complete(self) -> bool:
        return self.count == self.ceiling


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


def write_csv(logs: RunLog | Iterable[RunLog], path) -> None:
    """UTF-8 CSV with header ``run,seed,step,episode,metric,coverage``.

    ``path`` may also be an open text stream.
    """
    if isinstance(logs, RunLog):
        logs = [logs]
    records = sorted((r for log in logs for r in log.records), key=lambda r: (r.run, r.step))
    if hasattr(path, "write"):
        _write_rows(path, records)
        return
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        _write_rows(fh, records)


def _write_rows(fh, records) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.run, r.seed, r.step, r.episode, _fmt(r.metric), r.coverage])


def read_csv(path) -> RunLog:
    log = RunLog()
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            log.append(RunRecord(int(row["run"]), int(row["seed"]), int(row["step"]),
                                 int(row["episode"]), float(row["metric"]), int(row["coverage"])))
    return log


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def build(cfg: ExperimentConfig, seed: int, run: int = 0):
    """Environment, feature map and agent for one run, plus the stream dict."""
    streams = make_streams(seed, run)
    env = make_env(cfg.env, streams["env"], **cfg.env_params)
    features = make_features(env, cfg)
    agent = make_agent(cfg.agent, cfg.agent_cfg, features, env.n_actions, cfg.regime,
                       streams["init"], streams["agent"])
    return env, agent, streams


def run_single(cfg: ExperimentConfig, seed: int | None = None, run: int = 0,
               agent_hook=None) -> RunLog:
    """Run one agent on one environment for the configured budget.

    Episodic tasks log one record per episode; the continuing task logs its
    cumulative reward every ``log_every`` steps. ``agent_hook(agent, step)``
    is called after every step when given.
    """
    seed = cfg.seed if seed is None else seed
    env, agent, _ = build(cfg, seed, run)
    gamma = cfg.agent_cfg.discount
    log = RunLog()
    tracker = CoverageTracker(env.grid_size) if isinstance(env, DeepSea) else None
    start = time.perf_counter()

    def record(step, episode, metric):
        cov = tracker.count if tracker else 0
        log.append(RunRecord(run, seed, step, episode, metric, cov, time.perf_counter() - start))

    obs = env.reset()
    agent.begin_episode()
    if tracker:
        tracker.visit(obs)
    step = episode = ep_len = 0
    ep_return = 0.0
    ep_weight = 1.0
    total = 0.0
    while True:
        a = agent.act(obs)
        out = env.step(a)
        agent.observe(Transition(obs, a, out.reward, out.next_obs, gamma * out.discount))
        step += 1
        ep_len += 1
        total += out.reward
        if agent_hook is not None:
            agent_hook(agent, step)
        if not cfg.episodic:
            obs = out.next_obs
            if step % cfg.log_every == 0:
                record(step, 0, total)
            if step % cfg.agent_cfg.head_resample_steps == 0:
                agent.begin_episode()
            if step >= cfg.steps:
                break
            continue
        if cfg.metric == "return_discounted":
            ep_return += ep_weight * out.reward
            ep_weight *= gamma
        else:
            ep_return += out.reward
        if tracker and not out.terminal:
            tracker.visit(out.next_obs)
        truncated = env.max_steps is not None and ep_len >= env.max_steps
        if out.terminal or truncated:
            episode += 1
            record(step, episode, tracker.count if cfg.metric == "coverage" else ep_return)
            if cfg.episodes is not None and episode >= cfg.episodes:
                break
            if cfg.stop_when_covered and tracker and tracker.complete:
                break
            obs = env.reset()
            agent.begin_episode()
            ep_len = 0
            ep_return = 0.0
            ep_weight = 1.0
        else:
            obs = out.next_obs
        if cfg.steps is not None and step >= cfg.steps:
            break
    return log


def run_many(cfg: ExperimentConfig, runs: Sequence[int] | None = None) -> list[RunLog]:
    runs = range(cfg.runs) if runs is None else runs
    return [run_single(cfg, cfg.seed, r) for r in runs]


def run_sweep(cfg: ExperimentConfig, k_values: Sequence[int] = (1, 2, 8, 20),
              c_values: Sequence[float] = (1.0, 3.0, 10.0),
              runs: Sequence[int] | None = None) -> dict[tuple[int, float], list[RunLog]]:
    """One list of run logs per (k, c) cell; cells share nothing."""
    return {(k, c): run_many(cfg.with_agent(k=k, c=c), runs)
            for k, c in itertools.product(k_values, c_values)}


def summarize_sweep(results: dict[tuple[int, float], list[RunLog]]) -> list[dict]:
    rows = []
    for (k, c), logs in results.items():
        rows.append({"k": k, "c": c,
                     "final_window_mean": float(np.mean([l.final_window_mean() for l in logs])),
                     "area_under_curve": float(np.mean([l.area_under_curve() for l in logs]))})
    return rows


def best_cell(results, by: str = "final_window_mean") -> tuple[int, float]:
    rows = summarize_sweep(results)
    best = max(rows, key=lambda r: r[by])
    return best["k"], best["c"]


def pure_exploration_run(grid_sizes: Sequence[int], cfg: ExperimentConfig,
                         runs: Sequence[int] | None = None) -> dict[int, list[RunLog]]:
    """Reward-free Deepsea coverage curves for each grid size."""
    out = {}
    for n in grid_sizes:
        cell = replace(cfg, env="deepsea_pure", env_params={"grid_size": n}, metric=None)
        out[n] = run_many(cell, runs)
    return out


def config_summary(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["agent_cfg"] = asdict(cfg.agent_cfg)
    return d
