"""Collective dynamics of giant emitters coupled to square and cubic photonic lattices."""

__version__ = "0.1.0"
