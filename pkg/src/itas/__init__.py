"""Tutoring session runtime backed by an append-only knowledge graph."""

__version__ = "0.1.0"
