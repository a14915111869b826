"""Negatively correlated deep ensembles on a shared backbone, at desk scale."""

__version__ = "0.1.0"
