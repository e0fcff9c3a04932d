"""Approximate message passing, state evolution and Monte Carlo checks."""

__version__ = "0.1.0"
