"""Desk-scale speaker verification laboratory."""

__version__ = "0.1.0"
