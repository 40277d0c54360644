"""Executable concept-drift measures, taxonomy, stream generation and evaluation."""

__version__ = "0.1.0"
