"""wgplots command line: render figures from exported artifacts."""

from __future__ import annotations

import argparse
import sys

from .manifest import SchemaMismatch
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wgplots", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure from a plot manifest")
    p.add_argument("--manifest", required=True, help="plot manifest JSON")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        written = render(args.manifest)
    except SchemaMismatch as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
