"""Spatial semantic IDs for next-POI recommendation."""
