"""Saddle, spectrum, PDE solver, return map and horseshoe construction for the perturbed NLS."""

__version__ = "0.1.0"
