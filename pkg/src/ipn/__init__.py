"""Spiked Information-Plus-Noise matrices: deterministic equivalents and Monte Carlo checks."""

__version__ = "0.1.0"
