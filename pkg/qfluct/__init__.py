"""Numerical verification of the bipartite information fluctuation theorem."""

__version__ = "0.1.0"
