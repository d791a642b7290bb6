#!/usr/bin/env python3
"""Sweep exploration depth and candidate width over paired seeds.

Reproduces the scaling-trend experiment: mean final reward should be
nondecreasing in both the maximum inversion depth and the candidate count,
with realized compute rising alongside.

Usage:
    python scripts/depth_width_sweep.py [--config configs/two_mode_escape.json]
                                        [--dmax 1,2,3] [--n 1,2,4] [--out out/sweep]
"""

import argparse
import dataclasses
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ctrlz.harness import load_config, sweep, write_outputs


def int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/two_mode_escape.json")
    parser.add_argument("--dmax", type=int_list, default=[1, 2, 3])
    parser.add_argument("--n", type=int_list, default=[1, 2, 4])
    parser.add_argument("--runs", type=int, default=None)
    parser.add_argument("--out", default="out/sweep")
    args = parser.parse_args()

    cfg = load_config(args.config)
    if args.runs is not None:
        cfg = dataclasses.replace(cfg, seeds=dataclasses.replace(cfg.seeds, runs=args.runs))

    outcomes = sweep(cfg, args.dmax, args.n)
    write_outputs(args.out, outcomes)

    print(f"{'cell':22s} {'mean_reward':>12s} {'escape':>7s} {'nfe_avg':>8s}")
    for label, outcome in outcomes.items():
        s = outcome.stats
        escape = "-" if s.escape_rate is None else f"{s.escape_rate:.3f}"
        print(f"{label:22s} {s.mean_final_reward:12.4f} {escape:>7s} {s.mean_nfe_avg:8.3f}")
    print(f"\nwrote {args.out}/runs.csv, events.jsonl, summary.json, histograms.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
