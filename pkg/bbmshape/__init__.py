"""
bbmshape - numerical lab for the shape of branching Brownian motion in a periodic environment
"""

__version__ = "0.1.0"
