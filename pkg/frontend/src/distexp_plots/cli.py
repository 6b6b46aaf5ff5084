"""Command line entry point: plot_figures --kind {a,b} --in CSV [--in CSV2] --out PNG."""
from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, PlotError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot_figures",
        description="Render experiment figures from distexp CSV datasets.",
    )
    parser.add_argument("--kind", required=True, choices=("a", "b"),
                        help="figure kind: 'a' regret-vs-correlation lines, "
                             "'b' regret-vs-communication scatter")
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        metavar="CSV", help="input dataset; repeat to overlay")
    parser.add_argument("--out", default=None, metavar="PNG",
                        help="output image path (default fig_<kind>.png)")
    parser.add_argument("--xscale", choices=("linear", "log"), default="linear")
    parser.add_argument("--yscale", choices=("linear", "log"), default="linear")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = args.out or f"fig_{args.kind}.png"
    try:
        spec = FigureSpec(kind=args.kind, inputs=tuple(args.inputs), out=out,
                          xscale=args.xscale, yscale=args.yscale)
        written = render(spec)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"fig_{args.kind}: {len(args.inputs)} dataset(s) -> {written}")
    return 0


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
