"""Commute-network embeddings, urban community detection and socioeconomic evaluation."""

from .errors import (
    CommuneError,
    GraphError,
    ParseError,
    SpectralError,
    TrainingError,
)
from .graph import (
    CommuteGraph,
    PropagationMatrix,
    build_graph,
    graph_stats,
    log_transform,
    normalize_adjacency,
)

__version__ = "0.1.0"

__all__ = [
    "CommuneError",
    "GraphError",
    "ParseError",
    "SpectralError",
    "TrainingError",
    "CommuteGraph",
    "PropagationMatrix",
    "build_graph",
    "graph_stats",
    "log_transform",
    "normalize_adjacency",
]
