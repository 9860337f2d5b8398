"""Overlap specifications, groupoid abstractions, acyclic coverings and extension of partial isomorphisms."""

__version__ = "0.1.0"
