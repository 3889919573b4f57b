"""Learned reaching with an auto-tuned robust adaptive joint controller."""

__version__ = "0.1.0"
