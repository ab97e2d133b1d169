"""Small-signal stability of structure-preserving swing networks."""

__version__ = "0.1.0"
