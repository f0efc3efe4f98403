"""Command-line interface: report-plots <results.csv> --metric auc --out dir/."""

from __future__ import annotations

import argparse
import sys

from .plots import METRICS, PlotSpec, ReportError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="report-plots",
        description="Render metric-vs-noise-rate figures and tables from a results.csv.",
    )
    parser.add_argument("results", help="path to a results.csv file")
    parser.add_argument("--metric", choices=METRICS, default="auc")
    parser.add_argument("--out", default="figures", help="output directory")
    parser.add_argument(
        "--format",
        choices=("png", "svg", "both"),
        default="both",
        help="image format(s) to write",
    )
    parser.add_argument(
        "--reference",
        default=None,
        help="method the significance marks compare against "
        "(default: auto-detect the corrector arm)",
    )
    args = parser.parse_args(argv)
    formats = ("png", "svg") if args.format == "both" else (args.format,)
    try:
        spec = PlotSpec(
            csv_path=args.results,
            out_dir=args.out,
            metric=args.metric,
            formats=formats,
            reference=args.reference,
        )
        written = render(spec)
    except ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
