"""Monodromy solving and Galois/monodromy group analysis for parametric polynomial systems."""

__version__ = "0.1.0"
