"""Boolean-model simulation and intensity recovery for convex polytope grains."""

__version__ = "0.1.0"
