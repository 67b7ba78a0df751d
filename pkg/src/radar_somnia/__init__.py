"""Contactless radar sleep staging toolkit."""

__version__ = "0.1.0"
