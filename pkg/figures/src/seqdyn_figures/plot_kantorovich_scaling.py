"""Entry point for the kantorovich_scaling figure."""

import sys

from ._cli import run_script


def main(argv=None) -> int:
    return run_script("kantorovich_scaling", "kantorovich_scaling.png", argv)


if __name__ == "__main__":
    sys.exit(main())
