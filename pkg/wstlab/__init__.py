"""Weighted spanning trees on finite electric networks and in random environments."""

__version__ = "0.1.0"
