"""Retrieval-augmented standard-to-dialect Bengali translation toolkit."""

__version__ = "0.1.0"
