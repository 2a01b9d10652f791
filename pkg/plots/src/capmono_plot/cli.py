"""Command line interface.

    capmono-plot --report r.json [--report more.json] \
                 --panels F,G,margins --out dir/ --format svg

Exit codes: 0 ok, 2 bad arguments / unusable report.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import PlotSpec, ReportError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capmono-plot",
        description="Render F/G curves and inequality margins from capmono reports",
    )
    parser.add_argument("--report", action="append", required=True,
                        help="report JSON path (repeatable)")
    parser.add_argument("--panels", default="F,G,margins",
                        help="comma-separated subset of F,G,margins,convergence")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--format", default="svg", choices=("svg", "png"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    panels = tuple(p.strip() for p in args.panels.split(",") if p.strip())
    try:
        spec = PlotSpec(
            reports=tuple(Path(r) for r in args.report),
            panels=panels,
            out_dir=Path(args.out),
            fmt=args.format,
        )
        result = render(spec)
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for panel in result.panels:
        print(f"wrote {panel.path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
