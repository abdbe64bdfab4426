"""Adaptive quadratic DG methods for frictionless Signorini contact in 2D elasticity."""

__version__ = "0.1.0"
