"""Command line entry: `report <kind> --in <csv...> --out <png>`."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, ReportError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="report", description="Render figures from simulation run CSVs")
    parser.add_argument("kind", choices=KINDS, help="figure kind")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="CSV", help="one or more rounds.csv files")
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--labels", default=None,
                        help="comma-separated legend labels, one per input")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    labels = args.labels.split(",") if args.labels else []
    try:
        spec = FigureSpec(kind=args.kind, inputs=args.inputs, out=args.out,
                          labels=labels)
        render(spec)
    except ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
