"""Spatiotemporal crime-hotspot forecasting on regular grids."""

__version__ = "0.1.0"
