"""Numerical laboratory for gradient echo memory in cold atoms."""

__version__ = "0.1.0"
