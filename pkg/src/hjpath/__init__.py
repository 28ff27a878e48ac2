"""Canonical Hamilton-Jacobi analysis and path integrals for singular Lagrangians."""

__version__ = "0.1.0"
