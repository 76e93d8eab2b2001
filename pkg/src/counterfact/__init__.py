"""Counterfactual estimation for a single treated unit in panel data."""

__version__ = "0.1.0"
