"""Bandwidth allocation for stream processing flows in a datacenter fabric."""
__version__ = "0.1.0"
