# plots/src/qmpx_plots/cli.py

"""plot_curves <in.csv> <out.png> [--linear-y] [--title T]"""

from __future__ import annotations

import argparse
import sys

from .render import render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plot_curves", description=__doc__)
    ap.add_argument("input_csv")
    ap.add_argument("output_png")
    ap.add_argument("--linear-y", action="store_true", help="disable the default log-scale MSE axis")
    ap.add_argument("--title", default="")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    render(args.input_csv, args.output_png, title=args.title, log_y=not args.linear_y)
    print(f"wrote {args.output_png}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
