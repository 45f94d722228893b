"""Ensemble size k against bonus scale c for one agent on one environment."""
import argparse
from pathlib import Path

from vbe.harness import best_cell, load_config, run_sweep, summarize_sweep, write_csv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default="configs/riverswim.toml")
    p.add_argument("--k", default="1,2,8,20")
    p.add_argument("--c", default="1,3,10")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--out", default="results/sweep")
    args = p.parse_args()
    cfg = load_config(args.config)
    k_values = [int(x) for x in args.k.split(",")]
    c_values = [float(x) for x in args.c.split(",")]
    results = run_sweep(cfg, k_values, c_values, runs=range(args.runs))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for (k, c), logs in results.items():
        write_csv(logs, out / f"{cfg.env}_{cfg.agent}_k{k}_c{c:g}.csv")
    print("k,c,final_window_mean,area_under_curve")
    for row in summarize_sweep(results):
        print(f"{row['k']},{row['c']:g},{row['final_window_mean']:.6g},{row['area_under_curve']:.6g}")
    k, c = best_cell(results)
    print(f"best: k={k} c={c:g}")


if __name__ == "__main__":
    main()
