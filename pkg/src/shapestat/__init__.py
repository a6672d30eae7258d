"""Shape-constrained inference for two-sample problems."""

__version__ = "0.1.0"
