"""Point-cloud ray tracing and a hop-by-hop neural channel surrogate."""

__version__ = "0.1.0"
