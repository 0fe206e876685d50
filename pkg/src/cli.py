# KGBridge Command Line Entry Point
"""
Convenience module for running the CLI.

This allows running with: python -m src.cli
or via the pyproject.toml entry point: kgbridge
"""

import sys

from src.presentation.cli import main

if __name__ == "__main__":
    sys.exit(main())
