"""Greedy against optimistic target policies on Deepsea for VBE, ACB and RND."""
import argparse
from pathlib import Path

import numpy as np

from vbe.core import AgentConfig
from vbe.harness import ExperimentConfig, agent_defaults, run_single, write_csv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--grid", type=int, default=10)
    p.add_argument("--agents", default="vbe,acb,rnd")
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--out", default="results/ablation")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print("agent,mode,run,final_window_mean,right_share")
    for agent in args.agents.split(","):
        k = 1 if agent == "rnd" else 20
        for mode in ("greedy", "optimistic"):
            cfg = ExperimentConfig(env="deepsea", env_params={"grid_size": args.grid}, agent=agent,
                                   regime="tabular", episodes=args.episodes,
                                   agent_cfg=AgentConfig(k=k, c=1.0, target_policy=mode,
                                                         value_init="zeros",
                                                         **agent_defaults("deepsea", agent)))
            logs = []
            for run in range(args.runs):
                box = {}
                log = run_single(cfg, 0, run, agent_hook=lambda a, step: box.update(agent=a))
                buf = box["agent"].buffer
                logs.append(log)
                print(f"{agent},{mode},{run},{log.final_window_mean():.4f},"
                      f"{np.mean(buf.a[:len(buf)]):.4f}", flush=True)
            write_csv(logs, out / f"deepsea{args.grid}_{agent}_{mode}.csv")


if __name__ == "__main__":
    main()
