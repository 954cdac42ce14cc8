"""Hierarchical attention for segmentation, built on plain numpy."""

__version__ = "0.1.0"
