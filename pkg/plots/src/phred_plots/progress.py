"""Standalone renderer for the per-level progress panels."""

import argparse
import sys

from .figures import plot_progress


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="phred-plot-progress")
    parser.add_argument("--in", dest="source", required=True,
                        help="run directory with report.json and level files")
    parser.add_argument("--out", required=True, help="output image (svg/png)")
    args = parser.parse_args(argv)
    try:
        summary = plot_progress(args.source, args.out)
    except (ValueError, FileNotFoundError) as exc:
        print(f"phred-plot-progress: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({summary['panels']} panels)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
