"""Deductive code reasoning laboratory: mutate, trace, inspect, refine."""

__version__ = "0.1.0"
