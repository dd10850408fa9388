"""Embedding microservice: sentence and token vectors over HTTP."""

__version__ = "0.1.0"
