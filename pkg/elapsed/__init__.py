"""Numerical laboratory for the time elapsed neuron network model."""

__version__ = "1.0.0"
