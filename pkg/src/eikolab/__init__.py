"""Numerical laboratory for regularity of weak solutions of the 2D eikonal equation."""

__version__ = "0.1.0"
