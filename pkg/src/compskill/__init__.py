"""Composite skill learning from demonstration and evaluation."""

__version__ = "0.1.0"
