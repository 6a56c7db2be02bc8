"""Numerical checks of eigenvalue bounds for Schroedinger operators -Delta + V with complex V."""

__version__ = "0.1.0"
