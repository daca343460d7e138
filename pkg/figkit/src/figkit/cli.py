"""figkit command line: figkit <figure-kind> --in sweep.csv --out figure.png."""

from __future__ import annotations

import argparse
import sys

from .io import CsvFormatError
from .plots import FIGURE_KINDS, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figkit", description=__doc__)
    parser.add_argument("kind", choices=FIGURE_KINDS)
    parser.add_argument("--in", dest="infile", required=True, help="sweep CSV path")
    parser.add_argument("--out", required=True, help="output image (.png or .svg)")
    parser.add_argument("--payoff", help="keep only rows with this payoff")
    parser.add_argument("--scheme", help="keep only rows with this scheme")
    parser.add_argument("--window", type=int, default=3, help="moving-average window")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, csv_path=args.infile, out_path=args.out,
                      payoff=args.payoff, scheme=args.scheme, window=args.window)
    try:
        out = render(spec)
    except (CsvFormatError, FileNotFoundError) as exc:
        print(f"figkit: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
