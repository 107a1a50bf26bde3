"""Frequency-comb wideband transmission simulator with joint pilot-aided carrier recovery."""

__version__ = "0.1.0"
