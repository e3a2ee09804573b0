"""Finite-scale tooling for f̄ metrics, substitution cascades and projective cocycles."""

__version__ = "0.1.0"
