"""Planar real-to-sim-to-real manipulation pipeline."""

__version__ = "0.1.0"
