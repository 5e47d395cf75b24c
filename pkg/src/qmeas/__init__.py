"""Simultaneous continuous measurement of two observables and spin feedback."""

__version__ = "0.1.0"
