"""Numerical laboratory for the truncated operators lambda_k and P_k^-."""

__version__ = "0.1.0"
