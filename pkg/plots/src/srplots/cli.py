"""Command-line entry point: srplot <kind> --in <paths...> --out <file>."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srplot",
        description="Render experiment CSV artifacts: size-proportion curves, "
        "evolvability heat-maps, hypervolume convergence, archive fronts.",
    )
    parser.add_argument("kind", help=f"one of {', '.join(FIGURE_KINDS)}")
    parser.add_argument(
        "--in", dest="inputs", nargs="+", required=True, help="input CSV files or run directories"
    )
    parser.add_argument("--out", required=True, help="output image (PNG or PDF by extension)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, inputs=tuple(args.inputs), output=args.out)
    try:
        out = render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
