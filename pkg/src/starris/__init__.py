"""Tracking-driven beam design for a STAR-RIS-aided ISAC link."""

__version__ = "0.1.0"
