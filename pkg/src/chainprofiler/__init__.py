"""Ethereum address profiling, linking and deanonymization metrics."""

__version__ = "0.1.0"
