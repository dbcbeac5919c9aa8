"""Eigenfrequency and bandgap topology optimization with eigenvalue-cluster
means, bound formulations and MMA."""
from ._core import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
