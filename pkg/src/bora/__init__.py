"""LLM-assisted Bayesian optimization with a trust-regulated intervention policy."""

__version__ = "0.1.0"
