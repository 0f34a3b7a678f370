"""Eclipsing-binary morphology classification from polar hexbin images."""

__version__ = "0.1.0"
