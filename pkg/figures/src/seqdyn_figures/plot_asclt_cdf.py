"""Entry point for the asclt_cdf figure."""

import sys

from ._cli import run_script


def main(argv=None) -> int:
    return run_script("asclt_cdf", "asclt_cdf.png", argv)


if __name__ == "__main__":
    sys.exit(main())
