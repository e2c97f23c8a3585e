"""Entry point for the tail figure."""

import sys

from ._cli import run_script


def main(argv=None) -> int:
    return run_script("tail", "tail.png", argv)


if __name__ == "__main__":
    sys.exit(main())
