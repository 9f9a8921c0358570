"""Certified quasi-compactness and geometric ergodicity bounds for Markov kernels."""

__version__ = "0.1.0"
