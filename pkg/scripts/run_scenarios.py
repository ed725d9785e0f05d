"""Replicated scenario benchmark, ICODEN against Weibull-PH.

Defaults reproduce the three desk-scale comparisons (scenario 4 with p=20 and
10 replicates, scenario 1 with p=20 and scenario 3 with p=50, 5 replicates
each).  Roughly 18 minutes on one core.

    python scripts/run_scenarios.py --out results/scenarios
"""
import argparse
import json
from pathlib import Path

from icoden.benchmark import BenchmarkConfig, run_benchmark, summarize, write_replicates, write_summary

RUNS = [(4, 20, 10), (1, 20, 5), (3, 50, 5)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/scenarios")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    table = []
    for scenario, p, reps in RUNS:
        cfg = BenchmarkConfig(scenario=scenario, p=p, replicates=reps, seed=args.seed)
        rows = run_benchmark(cfg, workers=args.workers, log=print)
        summary = summarize(cfg, rows)
        write_replicates(cfg, rows, out / f"s{scenario}_p{p}_replicates.csv")
        table.extend(summary)
        print(json.dumps(summary))
    write_summary(table, out / "summary.csv")


if __name__ == "__main__":
    main()
