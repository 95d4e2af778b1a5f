#!/usr/bin/env python3
"""Train the three catch agents on three seeds and compare success rates.

Every agent gets the identical episode budget; evaluation replays the
same seeded episode set for all of them so rates are directly
comparable. This is the long-running experiment in the repo (roughly an
hour on a laptop core).
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from qmpc.harness import (EXIT_OK, baseline_matrix, load_config, run_eval)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/suite_catch.yaml")
    parser.add_argument("--out", default=None)
    parser.add_argument("--eval-episodes", type=int, default=100)
    parser.add_argument("--eval-seed", type=int, default=1000,
                        help="shared across agents so they face the same episodes")
    args = parser.parse_args(argv)

    with open(args.config, encoding="utf-8") as f:
        mapping = yaml.safe_load(f)
    out = Path(args.out or mapping.get("suite", {}).get("out", "results/suite-catch"))
    code = baseline_matrix(mapping, out)

    print(f"\n{'agent':<10} {'seed':>4} {'mean cost':>10} {'success':>8}")
    for cell_dir in sorted(out.iterdir()):
        if not (cell_dir / "best.qnet").exists():
            continue
        cfg = load_config(cell_dir / "config_echo.yaml")
        train_seed = cfg.seed
        cfg = replace(cfg, seed=args.eval_seed)
        eval_dir = cell_dir / "eval"
        run_eval(cfg, out_dir=eval_dir, checkpoint=cell_dir / "best.qnet",
                 n_episodes=args.eval_episodes)
        with open(eval_dir / "eval_report.yaml", encoding="utf-8") as f:
            report = yaml.safe_load(f)
        print(f"{cfg.agent_label:<10} {train_seed:>4} {report['mean_cost']:>10.1f} "
              f"{report['success_rate']:>8.2f}")
    if code != EXIT_OK:
        print("some cells failed; see status.yaml", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
