"""Shared argument handling for the one-script-per-figure entry points."""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, render
from .schema import SchemaError


def run_script(kind: str, default_out: str, argv=None) -> int:
    parser = argparse.ArgumentParser(description=f"render the {kind} figure from a CSV")
    parser.add_argument("csv", help="input CSV (schema-checked)")
    parser.add_argument("--summary", default=None, help="JSON record with fitted constants")
    parser.add_argument("--out", default=default_out, help="output image path")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    options = {} if args.title is None else {"title": args.title}
    try:
        path = render(FigureSpec(kind=kind, csv_path=args.csv, out_path=args.out,
                                 summary_path=args.summary, options=options))
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0
