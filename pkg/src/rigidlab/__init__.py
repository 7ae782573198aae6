"""Exact desk-scale experiments on F_2 rigidity and systematic linear data structures."""

__version__ = "0.1.0"
