"""Numerical laboratory for Wigner matrices and the local semicircle law."""

__version__ = "0.1.0"
