"""Run experiments, sweeps, coverage studies and verification checks."""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, verify
from .core import AgentConfig
from .errors import ConfigError


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _emit(logs, out: str | None, name: str) -> None:
    if out is None:
        harness.write_csv(logs, sys.stdout)
        return
    path = Path(out) / f"{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    harness.write_csv(logs, path)
    print(path)


def cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.runs is not None:
        cfg = replace(cfg, runs=args.runs)
    out = args.out or cfg.out
    _emit(harness.run_many(cfg), out, f"{cfg.env}_{cfg.agent}_seed{cfg.seed}")
    return 0


def cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    if args.runs is not None:
        cfg = replace(cfg, runs=args.runs)
    results = harness.run_sweep(cfg, _ints(args.k), _floats(args.c))
    out = args.out or cfg.out
    if out is not None:
        for (k, c), logs in results.items():
            _emit(logs, out, f"{cfg.env}_{cfg.agent}_k{k}_c{c:g}")
    w = csv.DictWriter(sys.stdout, ["k", "c", "final_window_mean", "area_under_curve"],
                       lineterminator="\n")
    w.writeheader()
    for row in harness.summarize_sweep(results):
        w.writerow({key: f"{v:.6g}" if isinstance(v, float) else v for key, v in row.items()})
    k, c = harness.best_cell(results)
    print(f"# best cell by final_window_mean: k={k} c={c:g}", file=sys.stderr)
    return 0


def cmd_coverage(args) -> int:
    if args.config:
        cfg = harness.load_config(args.config)
    else:
        cfg = harness.ExperimentConfig(
            env="deepsea_pure", agent=args.agent, regime="tabular",
            agent_cfg=AgentConfig(k=args.k, c=args.c, value_init="zeros",
                                  **harness.agent_defaults("deepsea_pure", args.agent)),
            episodes=args.episodes, runs=args.runs, stop_when_covered=True)
    results = harness.pure_exploration_run(_ints(args.grids), cfg)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["grid", "run", "episodes", "coverage", "ceiling"])
    for n, logs in results.items():
        for log in logs:
            last = log.records[-1]
            w.writerow([n, last.run, last.episode, last.coverage, n * (n + 1) // 2])
    if args.out:
        for n, logs in results.items():
            _emit(logs, args.out, f"coverage_N{n}_{cfg.agent}")
    return 0


def cmd_verify(args) -> int:
    results = verify.run_all(quick=args.quick)
    sys.stdout.write(verify.report_csv(results))
    failed = [r for r in results if not r.passed and not r.flagged]
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vbe", description=__doc__)
    p.add_argument("--format", choices=["csv"], default="csv", help="output format")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configured experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--runs", type=int)
    r.add_argument("--out")
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("sweep", help="grid over ensemble size k and bonus scale c")
    s.add_argument("--config", required=True)
    s.add_argument("--k", default="1,2,8,20")
    s.add_argument("--c", default="1,3,10")
    s.add_argument("--runs", type=int)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_sweep)

    c = sub.add_parser("coverage", help="reward-free Deepsea state coverage")
    c.add_argument("--grids", default="10,20,30,40,50")
    c.add_argument("--config")
    c.add_argument("--agent", default="vbe")
    c.add_argument("--k", type=int, default=1)
    c.add_argument("--c", type=float, default=1.0)
    c.add_argument("--episodes", type=int, default=10_000)
    c.add_argument("--runs", type=int, default=5)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_coverage)

    v = sub.add_parser("verify", help="run the exact and Monte Carlo checks")
    v.add_argument("--quick", action="store_true", help="smaller Monte Carlo budgets")
    v.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
