"""Staged reward and curriculum generation for a 2D driving policy."""

__version__ = "0.1.0"
