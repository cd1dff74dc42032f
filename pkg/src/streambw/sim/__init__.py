"""Fluid simulation of stream applications over a fabric."""
