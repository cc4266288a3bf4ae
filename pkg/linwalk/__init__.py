"""Change point detection for planar Linear Walk and Random Walk tracks."""
__version__ = "0.1.0"
