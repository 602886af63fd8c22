"""Undirected weighted commute graph built from directed origin-destination flows."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import GraphError


@dataclass(frozen=True, eq=False)
class CommuteGraph:
    """Symmetric weighted graph over tract nodes.

    ``weights`` holds the averaged two-way flow ``(f(i->j) + f(j->i)) / 2`` with a
    zero diagonal. The raw directed totals are kept only for summary statistics.
    """

    node_ids: tuple[str, ...]
    weights: sp.csr_matrix
    total_directed_flow: float
    directed_nonzero_count: int
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {g: i for i, g in enumerate(self.node_ids)})

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def index_of(self, geoid: str) -> int:
        return self._index[geoid]

    def degrees(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()

    def dense(self) -> np.ndarray:
        return self.weights.toarray()

    def total_weight(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def from_dense(cls, w, node_ids=None) -> "CommuteGraph":
        """Wrap an already symmetric matrix; directed totals are taken from it as-is."""
        w = np.asarray(w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError("weight matrix must be square")
        if not np.array_equal(w, w.T):
            raise GraphError("weight matrix must be symmetric")
        if (w < 0).any():
            raise GraphError("weights must be non-negative")
        n = w.shape[0]
        if node_ids is None:
            node_ids = tuple(f"{i:011d}" for i in range(n))
        node_ids = tuple(node_ids)
        if len(node_ids) != n:
            raise GraphError("node_ids length does not match matrix size")
        w = w.copy()
        np.fill_diagonal(w, 0.0)
        return cls(
            node_ids=node_ids,
            weights=sp.csr_matrix(w),
            total_directed_flow=float(w.sum()),
            directed_nonzero_count=int(np.count_nonzero(w)),
        )


@dataclass(frozen=True, eq=False)
class PropagationMatrix:
    rows: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.rows.shape[0]


class GraphStats(NamedTuple):
    nodes: int
    nonzero_edges: int
    avg_edge_weight: float


def sorted_node_ids(pairs: Iterable[tuple[str, str]]) -> list[str]:
    ids = set()
    for o, d in pairs:
        ids.add(o)
        ids.add(d)
    return sorted(ids)


def build_graph(records) -> CommuteGraph:
    """Aggregate directed ``(origin, dest, flow)`` records into a :class:`CommuteGraph`."""
    flows: dict[tuple[str, str], float] = defaultdict(float)
    for row, rec in enumerate(records):
        origin, dest, flow = rec[0], rec[1], rec[2]
        if not isinstance(origin, str) or not isinstance(dest, str) or not origin or not dest:
            raise GraphError(f"record {row}: ids must be non-empty strings, got {origin!r}, {dest!r}")
        flow = float(flow)
        if not np.isfinite(flow) or flow < 0:
            raise GraphError(f"record {row} ({origin} -> {dest}): negative or non-finite flow {flow!r}")
        flows[(origin, dest)] += flow
    if not flows:
        raise GraphError("cannot build a graph from zero records")

    node_ids = sorted_node_ids(flows)
    index = {g: i for i, g in enumerate(node_ids)}
    n = len(node_ids)

    keys = list(flows)
    rows = np.fromiter((index[o] for o, _ in keys), dtype=np.int64, count=len(keys))
    cols = np.fromiter((index[d] for _, d in keys), dtype=np.int64, count=len(keys))
    vals = np.fromiter((flows[k] for k in keys), dtype=float, count=len(keys))

    total = float(vals.sum())
    nonzero = int(np.count_nonzero(vals))

    off = rows != cols
    directed = sp.csr_matrix((vals[off], (rows[off], cols[off])), shape=(n, n))
    # a + b == b + a in IEEE arithmetic, so the result is exactly symmetric
    weights = ((directed + directed.T) * 0.5).tocsr()
    weights.eliminate_zeros()
    weights.sort_indices()
    return CommuteGraph(
        node_ids=tuple(node_ids),
        weights=weights,
        total_directed_flow=total,
        directed_nonzero_count=nonzero,
    )


def graph_stats(g: CommuteGraph) -> GraphStats:
    if g.n == 0:
        raise GraphError("graph is empty")
    return GraphStats(g.n, g.directed_nonzero_count, g.total_directed_flow / g.n**2)


def normalize_adjacency(g: CommuteGraph) -> PropagationMatrix:
    """Row-normalized adjacency with unit self-loops, ``D~^-1 (W + I)``."""
    if g.n == 0:
        raise GraphError("graph is empty")
    a = (g.weights + sp.identity(g.n, format="csr")).tocsr()
    rowsum = np.asarray(a.sum(axis=1)).ravel()
    rows = (sp.diags(1.0 / rowsum) @ a).tocsr()
    return PropagationMatrix(rows=rows)


def log_transform(g: CommuteGraph) -> np.ndarray:
    """Dense reconstruction target ``ln(1 + w)``."""
    return np.log1p(g.dense())
