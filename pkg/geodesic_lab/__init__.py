"""Desk-scale lab for the refined prime geodesic theorem."""

__version__ = "0.3.0"
