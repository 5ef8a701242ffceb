"""Rotated-box angle encoding, overlap measures and evaluation."""

__version__ = "0.1.0"
