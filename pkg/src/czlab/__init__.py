"""Numerical laboratory for Calderon-Zygmund blow-up on convex graph surfaces and warped model manifolds."""

__version__ = "0.1.0"
