# Presentation Layer - Command Line Interface

from .cli import build_parser, main

__all__ = ["build_parser", "main"]
