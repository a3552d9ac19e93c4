"""Contestable decision support for Parkinson's gait monitoring."""

__version__ = "0.1.0"
