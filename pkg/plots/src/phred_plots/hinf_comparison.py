"""Standalone renderer for the error-versus-order comparison curves."""

import argparse
import sys

from .figures import plot_hinf_comparison


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="phred-plot-hinf")
    parser.add_argument("--in", dest="source", required=True,
                        help="comparison.csv from the study")
    parser.add_argument("--out", required=True, help="output image (svg/png)")
    args = parser.parse_args(argv)
    try:
        plot_hinf_comparison(args.source, args.out)
    except (ValueError, FileNotFoundError) as exc:
        print(f"phred-plot-hinf: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
