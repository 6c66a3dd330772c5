"""Unsupervised rank aggregation with fusion graphs, fusion vectors and approximate search."""

__version__ = "0.1.0"
