"""Branching fractional Brownian motion: discrete urn approximations, Gaussian samplers and checks."""

__version__ = "0.1.0"
