"""Clustering-based resilient state estimation for power grids."""
from .errors import ConfigError, NumericalError, ResilientSEError
from .lti import LtiSystem, observability_rank, stable_subspace

__version__ = "0.1.0"

__all__ = ["ConfigError", "LtiSystem", "NumericalError", "ResilientSEError", "observability_rank",
           "stable_subspace"]
