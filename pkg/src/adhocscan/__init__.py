"""Detect and profile ad hoc string parsers in Python source code."""

__version__ = "0.1.0"
