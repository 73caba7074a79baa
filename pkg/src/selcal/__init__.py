"""Selective recalibration over precomputed classifier outputs."""

__version__ = "0.1.0"
