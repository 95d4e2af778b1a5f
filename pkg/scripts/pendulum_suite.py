#!/usr/bin/env python3
"""Run the pendulum comparison matrix and print a per-agent summary.

Trains the short-horizon agent on three seeds, evaluates the two planner
baselines, and leaves one combined CSV ready for plotting. Expect on the
order of ten minutes on a laptop core.
"""

import argparse
import sys
from collections import defaultdict
from pathlib import Path

import yaml

from qmpc.harness import EXIT_OK, baseline_matrix, read_metrics_csv


def summarize(combined_csv: Path) -> None:
    rows = read_metrics_csv(combined_csv)
    by_agent = defaultdict(list)
    for r in rows:
        by_agent[r["agent"]].append(r)
    print(f"\n{'agent':<14} {'rows':>5} {'mean cost':>10} {'success':>8}")
    for agent in sorted(by_agent):
        rs = by_agent[agent]
        # for trained agents the tail of the learning curve is the honest
        # summary; eval-only agents have flat rows so the tail is free
        tail = rs[-20:] if len(rs) > 20 else rs
        cost = sum(float(r["total_cost"]) for r in tail) / len(tail)
        succ = sum(int(r["success"]) for r in tail) / len(tail)
        print(f"{agent:<14} {len(rs):>5} {cost:>10.1f} {succ:>8.2f}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/suite_pendulum.yaml")
    parser.add_argument("--out", default=None,
                        help="output directory (default: suite.out from config)")
    args = parser.parse_args(argv)

    with open(args.config, encoding="utf-8") as f:
        mapping = yaml.safe_load(f)
    out = Path(args.out or mapping.get("suite", {}).get("out", "results/suite-pendulum"))
    code = baseline_matrix(mapping, out)
    summarize(out / "combined.csv")
    if code != EXIT_OK:
        print("some cells failed; see status.yaml", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
