"""Standalone renderer for the sample-distribution histogram."""

import argparse
import sys

from .figures import HIST_BINS, plot_histogram


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="phred-plot-histogram")
    parser.add_argument("--in", dest="source", required=True,
                        help="samples CSV (single omega column)")
    parser.add_argument("--out", required=True, help="output image (svg/png)")
    parser.add_argument("--bins", type=int, default=HIST_BINS)
    args = parser.parse_args(argv)
    try:
        summary = plot_histogram(args.source, args.out, bins=args.bins)
    except (ValueError, FileNotFoundError) as exc:
        print(f"phred-plot-histogram: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({int(summary['counts'].sum())} samples binned)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
