"""Formal and contextual latent analysis of a painting corpus."""

__version__ = "0.1.0"
