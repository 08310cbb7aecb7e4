"""Exact laws, reference limits, couplings and error bounds for quasi-logarithmic structures."""

__version__ = "0.1.0"
