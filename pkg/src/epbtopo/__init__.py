"""Topological invariants of an exceptional-parabola two-state model."""

__version__ = "0.1.0"
