"""Conditional diffusion for synthesizing 4D light fields from a single image."""
from .errors import DegenerateRegionError, LFError, NumericalAbort

__version__ = "0.1.0"

__all__ = ["LFError", "DegenerateRegionError", "NumericalAbort", "__version__"]
