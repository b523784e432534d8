"""Event detection with learned temporal-alignment uncertainty."""

__version__ = "0.1.0"
