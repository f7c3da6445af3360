"""Bayesian design and analysis of binary-endpoint clinical trials."""

__version__ = "0.1.0"
