"""Information-theoretic acquisition functions for Bayesian active learning."""
__version__ = "0.1.0"
