"""Separated learning and control for model/actual system pairs."""

__version__ = "0.1.0"
