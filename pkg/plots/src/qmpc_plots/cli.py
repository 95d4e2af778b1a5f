"""Command line entry: render figures from a combined metrics CSV."""

import argparse
import sys

from .curves import CurveSpec, render_curves, render_success_table


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qmpc-plots",
        description="Render learning curves and success tables from metrics CSVs.")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("curves", help="seed-banded learning curves")
    c.add_argument("--csv", required=True)
    c.add_argument("--out", required=True, help="figure path (.png or .svg)")
    c.add_argument("--x", default="episode")
    c.add_argument("--y", default="total_cost")
    c.add_argument("--smoothing", type=int, default=10)
    c.add_argument("--raw", action="store_true",
                   help="disable smoothing (same as --smoothing 1)")
    c.add_argument("--band", choices=("minmax", "std"), default="minmax")
    c.add_argument("--reference", default="mppi-true",
                   help="agent drawn as a dashed baseline ('' for none)")

    t = sub.add_parser("success", help="mean success per agent")
    t.add_argument("--csv", required=True)
    t.add_argument("--out", required=True, help=".md for markdown, else an image")

    args = parser.parse_args(argv)
    try:
        if args.command == "curves":
            spec = CurveSpec(x=args.x, y=args.y,
                             smoothing=1 if args.raw else args.smoothing,
                             band=args.band)
            render_curves(args.csv, spec, args.out,
                          reference=args.reference or None)
        else:
            render_success_table(args.csv, args.out)
    except (ValueError, FileNotFoundError) as e:
        print(str(e), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
