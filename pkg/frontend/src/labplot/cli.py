"""Command line entry: labplot <kind> <csv...> -o <png/svg>."""

import argparse
import sys

from .figures import (
    KIND_EXPERIMENTS,
    EmptyInputError,
    FigureSpec,
    SchemaMismatchError,
    render,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="labplot", description="render figures from lab result CSVs"
    )
    parser.add_argument("kind", choices=sorted(KIND_EXPERIMENTS))
    parser.add_argument("csvs", nargs="+", metavar="csv")
    parser.add_argument("-o", "--out", required=True,
                        help="output image path (.png or .svg)")
    args = parser.parse_args(argv)
    try:
        path = render(FigureSpec(tuple(args.csvs), args.kind, args.out))
    except (SchemaMismatchError, EmptyInputError, OSError) as exc:
        print(f"labplot: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
