"""Compare agents on River Swim, Puddle World, Mountain Car and Deepsea.

Writes one CSV per (environment, agent) under --out and prints a summary.
"""
import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from vbe.core import AgentConfig
from vbe.harness import ExperimentConfig, agent_defaults, run_many, write_csv

# (k, c) per environment and agent; agents missing here use k=20, c=1.
SETTINGS = {
    "riverswim": {"vbe": (20, 1.0)},
    "puddleworld": {"vbe": (1, 10.0)},
    "mountaincar_sparse": {"vbe": (2, 1.0)},
    "deepsea": {"vbe": (20, 1.0), "dqn_p": (1, 10.0), "bdqn": (20, 10.0), "acb": (20, 1.0)},
}
BUDGET = {"riverswim": ("steps", 50_000), "puddleworld": ("steps", 50_000),
          "mountaincar_sparse": ("steps", 50_000), "deepsea": ("episodes", 10_000)}


def config(env, agent, runs, seed):
    k, c = SETTINGS[env].get(agent, (20, 1.0))
    deepsea = env == "deepsea"
    extra = {"value_init": "zeros"} if deepsea else {}
    kind, n = BUDGET[env]
    return ExperimentConfig(env=env, agent=agent, regime="tabular" if deepsea else "tile_linear",
                            env_params={"grid_size": 10} if deepsea else {},
                            agent_cfg=AgentConfig(k=k, c=c, **agent_defaults(env, agent), **extra),
                            runs=runs, seed=seed, **{kind: n})


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--envs", default="riverswim,puddleworld,mountaincar_sparse,deepsea")
    p.add_argument("--agents", default="vbe,bdqn,dqn_p,rnd,acb")
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, help="override the step budget of continuing/step-budget tasks")
    p.add_argument("--out", default="results/classic")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for env in args.envs.split(","):
        for agent in args.agents.split(","):
            cfg = config(env, agent, args.runs, args.seed)
            if args.steps and cfg.steps:
                cfg = replace(cfg, steps=args.steps)
            logs = run_many(cfg)
            write_csv(logs, out / f"{env}_{agent}.csv")
            final = [log.final_window_mean() for log in logs]
            print(f"{env:20s} {agent:8s} final-window mean {np.mean(final):9.4f} "
                  f"+- {np.std(final) / np.sqrt(len(final)):.4f}", flush=True)


if __name__ == "__main__":
    main()
