"""Noisy shallow-circuit sampling via effective 1D monitored dynamics."""

__version__ = "0.1.0"
