"""Reverse augmented constraint preconditioning for contact saddle-point systems."""

__version__ = "0.1.0"
