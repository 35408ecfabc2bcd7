"""Quantum optimal control toolkit."""

__version__ = "0.1.0"
