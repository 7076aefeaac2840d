"""Entry point for bicm-mmse command."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
