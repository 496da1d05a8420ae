"""Entry point for python -m ctdr."""

import sys

from ctdr.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
