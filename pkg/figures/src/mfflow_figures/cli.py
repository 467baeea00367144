"""The ``render`` command: one raster figure from one run directory."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import FigureDataError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render a figure analog from a run directory's tidy CSVs.",
    )
    parser.add_argument("--figure", type=int, required=True, choices=(1, 2, 3))
    parser.add_argument("--run", required=True, help="run directory with figure CSVs")
    parser.add_argument("--out", required=True, help="output image path (.png)")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .render import FigureSpec, render

    spec = FigureSpec(
        figure_id=args.figure,
        run_dir=Path(args.run),
        out_path=Path(args.out),
        dpi=args.dpi,
    )
    try:
        out = render(spec)
    except FigureDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
