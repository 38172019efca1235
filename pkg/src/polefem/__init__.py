"""Finite elements on a truncated 2D domain with transparent boundaries
realized by the pole condition through Hardy-space infinite elements."""

__version__ = "0.1.0"
