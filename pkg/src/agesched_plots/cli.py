"""Script entry point: one figure per invocation.

    agesched-plots KIND input.csv output.png

Exit codes: 0 rendered, 1 usage or unreadable input, 2 CSV schema mismatch.
"""

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaMismatch, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="agesched-plots",
        description="Render a figure from an agesched sweep CSV.")
    p.add_argument("kind", choices=KINDS, help="which sweep schema the CSV follows")
    p.add_argument("csv", help="input CSV path (agesched sweep output)")
    p.add_argument("out", help="output image path (.png or .svg)")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        render(FigureSpec(args.csv, args.kind, args.out))
    except SchemaMismatch as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
