"""Depth decoding, epipolar masking, depth-aware superpixels and VO depth fusion."""

__version__ = "0.1.0"
