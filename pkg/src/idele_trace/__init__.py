"""Exact finite-level verification of the twisted trace formula and the norm index theorem."""

__version__ = "0.1.0"
