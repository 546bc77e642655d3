"""Desk-scale human-in-the-loop active learning for 3D tubular segmentation."""

__version__ = "0.1.0"
