"""``render`` command: consistency-report CSVs to a figure file."""

from __future__ import annotations

import argparse
import sys

from .figures import render_neutral, render_stratified
from .reader import SchemaError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="Render ekmanfv report CSVs into figures")
    parser.add_argument("--in", dest="report_dir", required=True,
                        help="directory holding the report CSVs")
    parser.add_argument("--out", required=True, help="output image (.png or .svg)")
    parser.add_argument("--figure", choices=("neutral", "stratified"),
                        required=True)
    args = parser.parse_args(argv)
    try:
        if args.figure == "neutral":
            path = render_neutral(args.report_dir, args.out)
        else:
            path = render_stratified(args.report_dir, args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
