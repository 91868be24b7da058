"""Command line for batch figure rendering.

Reads a results CSV (the simulation harness schema) and writes one panel
figure.  Configure with flags or a JSON figure spec mirroring the FigureSpec
field names; flags override the file.
"""

from __future__ import annotations

import argparse
import json
import sys

from .render import FigureSpec, SchemaError, render

__all__ = ["main"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eptr-figures",
        description="Render sweep-result CSVs into panel figures (mean +- standard error).",
    )
    parser.add_argument("--spec", help="JSON figure spec (flags override its values)")
    parser.add_argument("--csv", help="input results CSV")
    parser.add_argument("--out", help="output image path (.png, .pdf, ...)")
    parser.add_argument("--problem", help="keep only rows for this problem")
    parser.add_argument("--metrics", help="comma-separated metric subset")
    parser.add_argument("--sweep-vars", dest="sweep_vars", help="comma-separated sweep variables")
    parser.add_argument("--dpi", type=int, default=120)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    doc: dict = {}
    if args.spec:
        try:
            with open(args.spec, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read figure spec: {exc}", file=sys.stderr)
            return 2
    if args.csv:
        doc["csv_path"] = args.csv
    if args.out:
        doc["out_path"] = args.out
    if args.problem:
        doc["problem"] = args.problem
    if args.metrics:
        doc["metrics"] = [m for m in args.metrics.split(",") if m]
    if args.sweep_vars:
        doc["sweep_vars"] = [v for v in args.sweep_vars.split(",") if v]
    if args.dpi:
        doc.setdefault("dpi", args.dpi)

    for required in ("csv_path", "out_path"):
        if required not in doc:
            print(f"error: {required} is required (flag or spec file)", file=sys.stderr)
            return 2
    try:
        spec = FigureSpec(
            csv_path=doc["csv_path"],
            out_path=doc["out_path"],
            problem=doc.get("problem"),
            metrics=tuple(doc["metrics"]) if doc.get("metrics") else None,
            sweep_vars=tuple(doc["sweep_vars"]) if doc.get("sweep_vars") else None,
            errorbar=doc.get("errorbar", "se"),
            dpi=int(doc.get("dpi", 120)),
        )
        path = render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
