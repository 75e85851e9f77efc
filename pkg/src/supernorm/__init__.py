"""Subgraph-specific factor normalization for graph neural networks.

The heavy pieces (estimators, experiments) are imported from their
modules; this namespace re-exports the core types.
"""

from .exceptions import NumericalError, SupernormError, ValidationError
from .graph import BatchedGraphs, Graph, batch
from .spectral import FactorConfig, NodeFactors, batch_factors, graph_factors

__version__ = "0.1.0"

__all__ = [
    "BatchedGraphs",
    "FactorConfig",
    "Graph",
    "NodeFactors",
    "NumericalError",
    "SupernormError",
    "ValidationError",
    "batch",
    "batch_factors",
    "graph_factors",
]
