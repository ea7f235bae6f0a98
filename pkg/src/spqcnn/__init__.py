"""Symmetry-preserving split-parallel quantum convolutional circuits."""

__version__ = "0.1.0"
