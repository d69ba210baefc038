"""Numerical experiments on rotationally symmetric p-harmonic self-maps of spheres."""

__version__ = "0.1.0"
