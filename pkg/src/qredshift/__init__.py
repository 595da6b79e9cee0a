"""Gravitational redshift of photonic spectral modes as a multimode mixer."""

__version__ = "0.1.0"
