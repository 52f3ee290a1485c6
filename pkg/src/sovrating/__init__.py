"""Sovereign credit rating models with cross-validated evaluation and exact Shapley explanations."""

__version__ = "0.1.0"
