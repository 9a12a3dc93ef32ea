"""Lattice stochastic heat equation and directed polymer toolkit."""

__version__ = "0.1.0"
