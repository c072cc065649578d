"""Geo-social POI recommendation from social influence, activity centers and matrix factorization."""

__version__ = "0.1.0"
