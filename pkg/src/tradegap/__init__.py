"""Numerical laboratory for discrete versus continuous asset trading in a Brownian exchange economy."""

__version__ = "0.1.0"
