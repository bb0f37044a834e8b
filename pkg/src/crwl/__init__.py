"""Modules, models and proofs for constructor-based conditional rewriting."""

from pathlib import Path

FIXTURES = Path(__file__).with_name("fixtures")

__version__ = "0.1.0"
