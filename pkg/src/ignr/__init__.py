"""Implicit graphon neural representations trained with a Gromov-Wasserstein loss."""

from .errors import CheckpointError, IgnrError, InputDomainError, NumericalError
from .graphon import Dataset, Graph, GraphonGrid, GraphonSpec

__version__ = "0.1.0"

__all__ = ["CheckpointError", "Dataset", "Graph", "GraphonGrid", "GraphonSpec", "IgnrError",
           "InputDomainError", "NumericalError", "__version__"]
