"""Pitch tracking and evaluation toolkit for singing voice."""
__version__ = "0.1.0"
