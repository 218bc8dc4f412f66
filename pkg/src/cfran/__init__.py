"""Counterfactual what-if analysis for an intent-driven radio scheduler loop."""

__version__ = "0.1.0"
