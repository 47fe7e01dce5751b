"""Robust sensor placement for linear inverse problems under sensor failure."""

__version__ = "0.1.0"
