"""Numerical construction and verification of glued sphere-plane self-shrinkers.

The package builds discrete self-shrinking surfaces by desingularizing the
intersection of the sphere of radius sqrt(2) and the horizontal plane with a
wrapped saddle surface, then solves the linearized equation piecewise and runs
a nonlinear fixed-point loop until the discrete shrinker equation
``H + X . nu = 0`` holds at every vertex.
"""

from .params import ConstructionParams

__all__ = ["ConstructionParams"]
__version__ = "0.1.0"
