"""Noisy quantum-walk dataset synthesis and noise-classification models."""

__version__ = "0.1.0"
