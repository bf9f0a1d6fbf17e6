"""Concept probing and concept backpropagation on small neural networks."""

__version__ = "0.1.0"
