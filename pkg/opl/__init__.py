"""Orientation percolation lab: correlation of {a->s} and {s->b} in randomly oriented G(n,p)."""

__version__ = "1.0.0"
