"""Planted-partition commute graphs with known communities and block-correlated incomes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import Partition
from .errors import CommuneError
from .graph import build_graph
from .ingest import IncomeTable, ODRecord

INCOME_NOISE = 0.10


@dataclass
class PlantedSpec:
    n: int = 120
    k: int = 3
    p_in: float = 0.3
    p_out: float = 0.02
    # commuters per non-zero tract pair; real metro networks average roughly 3-12
    w_in: float = 5.0
    w_out: float = 5.0
    income_centers: tuple | None = None
    seed: int = 0

    def validate(self):
        if self.n < 1 or self.k < 1 or self.k > self.n:
            raise CommuneError(f"need 1 <= k <= n, got n={self.n}, k={self.k}")
        for name in ("p_in", "p_out"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise CommuneError(f"{name} must lie in [0, 1], got {v}")
        if self.w_in <= 0 or self.w_out <= 0:
            raise CommuneError("mean edge weights must be positive")
        if self.income_centers is not None:
            if len(self.income_centers) != self.k:
                raise CommuneError("income_centers needs one value per block")
            if any(c <= 0 for c in self.income_centers):
                raise CommuneError("income centers must be positive")


def synthetic_geoid(i: int) -> str:
    return f"99{i:09d}"


def block_labels(n, k):
    """Contiguous blocks; the first ``n % k`` blocks take one extra node."""
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    return np.repeat(np.arange(k), sizes)


def generate_records(spec: PlantedSpec):
    """Directed O-D records for the planted graph plus ground-truth labels and incomes.

    Every undirected edge is written as two directed records carrying the same
    flow, so the symmetrized graph weight equals the drawn weight.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    labels = block_labels(spec.n, spec.k)
    iu, ju = np.triu_indices(spec.n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, spec.p_in, spec.p_out)
    keep = rng.random(iu.size) < prob
    means = np.where(same, spec.w_in, spec.w_out)
    weights = rng.exponential(1.0, size=iu.size) * means

    ids = [synthetic_geoid(i) for i in range(spec.n)]
    records = []
    for i, j, w in zip(iu[keep], ju[keep], weights[keep]):
        w = float(w)
        records.append(ODRecord(ids[i], ids[j], w))
        records.append(ODRecord(ids[j], ids[i], w))
    # zero self-flows keep isolated nodes in the node set
    records.extend(ODRecord(g, g, 0.0) for g in ids)

    incomes = IncomeTable()
    if spec.income_centers is not None:
        centers = np.asarray(spec.income_centers, dtype=float)[labels]
        draws = centers * (1.0 + INCOME_NOISE * rng.standard_normal(spec.n))
        draws = np.maximum(draws, 1.0)
        incomes.values.update({g: float(v) for g, v in zip(ids, draws)})
    return records, labels, incomes


def generate(spec: PlantedSpec):
    """Return ``(graph, planted partition, incomes)``."""
    records, labels, incomes = generate_records(spec)
    g = build_graph(records)
    return g, Partition(labels, spec.k), incomes
