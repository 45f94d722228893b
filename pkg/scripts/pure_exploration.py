"""Reward-free Deepsea: distinct cells visited against episodes, per grid size."""
import argparse
from pathlib import Path

from vbe.core import AgentConfig
from vbe.harness import ExperimentConfig, agent_defaults, pure_exploration_run, write_csv

# (k, c) used for the coverage comparison.
SETTINGS = {"vbe": (1, 1.0), "vbe_sl": (20, 1.0), "dqn_p": (1, 1.0), "bdqn": (20, 1.0),
            "acb": (20, 1.0), "rnd": (1, 1.0), "ddqn_eps": (1, 0.0)}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--grids", default="10,20,30,40,50")
    p.add_argument("--agents", default=",".join(SETTINGS))
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--out", default="results/coverage")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grids = [int(n) for n in args.grids.split(",")]
    for agent in args.agents.split(","):
        k, c = SETTINGS[agent]
        cfg = ExperimentConfig(env="deepsea_pure", agent=agent, regime="tabular",
                               agent_cfg=AgentConfig(k=k, c=c, value_init="zeros",
                                                     **agent_defaults("deepsea_pure", agent)),
                               episodes=args.episodes, runs=args.runs, stop_when_covered=True)
        for n, logs in pure_exploration_run(grids, cfg).items():
            write_csv(logs, out / f"N{n}_{agent}.csv")
            ceiling = n * (n + 1) // 2
            print(f"{agent:8s} N={n:3d} coverage {[log.final_coverage for log in logs]} / {ceiling}",
                  flush=True)


if __name__ == "__main__":
    main()
