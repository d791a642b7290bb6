#!/usr/bin/env python3
"""Benchmark all five strategies on the two-mode escape landscape.

Runs every strategy over the same paired seeds, prints a comparison table
(mean final reward, escape rate, realized forward passes per step), and
writes the standard output files.

Usage:
    python scripts/escape_benchmark.py [--config configs/two_mode_escape.json]
                                       [--runs 200] [--seed 20260810] [--out out/escape]
"""

import argparse
import dataclasses
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ctrlz.harness import compare, load_config, write_outputs

STRATEGIES = ["ddim", "resampling", "zsampling", "sop", "ctrlz"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/two_mode_escape.json")
    parser.add_argument("--runs", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="out/escape")
    args = parser.parse_args()

    cfg = load_config(args.config)
    if args.runs is not None or args.seed is not None:
        seeds = dataclasses.replace(
            cfg.seeds,
            runs=args.runs if args.runs is not None else cfg.seeds.runs,
            master_seed=args.seed if args.seed is not None else cfg.seeds.master_seed,
        )
        cfg = dataclasses.replace(cfg, seeds=seeds)

    outcomes = compare(cfg, STRATEGIES)
    write_outputs(args.out, outcomes)

    print(f"{'strategy':12s} {'mean_reward':>12s} {'escape':>7s} {'nfe_avg':>8s} {'reward_calls':>13s}")
    for name, outcome in outcomes.items():
        s = outcome.stats
        escape = "-" if s.escape_rate is None else f"{s.escape_rate:.3f}"
        print(
            f"{name:12s} {s.mean_final_reward:12.4f} {escape:>7s} {s.mean_nfe_avg:8.3f} {s.mean_reward_calls:13.1f}"
        )
    print(f"\nwrote {args.out}/runs.csv, events.jsonl, summary.json, histograms.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
