"""Basis-network pretraining, decimal domain mapping and least-squares projection."""

__version__ = "0.1.0"
