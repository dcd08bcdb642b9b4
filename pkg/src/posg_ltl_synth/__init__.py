"""Finite state controller synthesis for temporal goals in partially observable stochastic games."""

__version__ = "0.1.0"
