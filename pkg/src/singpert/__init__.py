"""Singularly perturbed catalytic equations.

Series solutions, resultant elimination, critical systems, asymptotics and
pattern counts in planar near-triangulations.
"""
__version__ = "0.1.0"
