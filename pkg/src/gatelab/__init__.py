"""Numerical laboratory for deep gated networks."""

__version__ = "0.1.0"
