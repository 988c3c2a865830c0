"""Simulation and small-ball diagnostics for the vector stochastic heat equation on a circle."""

__version__ = "0.1.0"
