"""Cokernel flags of products of random p-adic matrices."""

__version__ = "0.1.0"
