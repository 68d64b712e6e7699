"""Sparse convex ensembles of DNF rule sets with distributionally robust column generation."""

__version__ = "0.1.0"
