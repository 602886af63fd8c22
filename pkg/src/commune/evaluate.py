"""Income-based evaluation of community partitions."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .cluster import Partition
from .communities import modularity, nmi
from .errors import CommuneError
from .graph import CommuteGraph
from .ingest import IncomeTable

DEFAULT_BINS = 20
RESULTS_COLUMNS = (
    "city",
    "method",
    "k",
    "modularity",
    "js_divergence",
    "income_delta_usd",
    "community_sizes",
    "seed",
)


@dataclass
class IncomeHistogram:
    bin_edges: np.ndarray
    mass: np.ndarray
    count: int = 0

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.mass = np.asarray(self.mass, dtype=float)
        if self.bin_edges.size != self.mass.size + 1:
            raise ValueError("need exactly one more edge than bins")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")


@dataclass
class RunReport:
    city: str
    method: str
    k: int
    modularity: float
    js_divergence: float
    income_delta_usd: float
    community_sizes: list
    seed: int
    divergence_available: bool = True
    high_income_community: int | None = None
    low_income_community: int | None = None
    community_median_income: dict = field(default_factory=dict)
    nmi: float | None = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def results_row(self):
        d = self.to_dict()
        d["community_sizes"] = " ".join(str(s) for s in self.community_sizes)
        return [d[c] for c in RESULTS_COLUMNS]


def _labels(p):
    return p.labels if isinstance(p, Partition) else np.asarray(p, dtype=np.int64)


def community_incomes(p, incomes: IncomeTable, node_ids) -> dict[int, np.ndarray]:
    """Incomes of each community's tracts; tracts without a value are left out."""
    labels = _labels(p)
    if len(node_ids) != labels.size:
        raise CommuneError("partition and node list differ in length")
    out: dict[int, list] = {int(c): [] for c in np.unique(labels)}
    for geoid, c in zip(node_ids, labels):
        v = incomes.values.get(geoid)
        if v is not None:
            out[int(c)].append(v)
    return {c: np.asarray(v, dtype=float) for c, v in out.items()}


def shared_bin_edges(values, bins=DEFAULT_BINS):
    if bins < 2:
        raise CommuneError("need at least 2 bins")
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise CommuneError("no income values to bin")
    lo, hi = float(values.min()), float(values.max())
    edges = np.linspace(lo, hi, bins + 1)
    if hi <= lo or np.any(np.diff(edges) <= 0):
        # range is zero or below float resolution: widen by one unit
        edges = np.linspace(lo, lo + max(hi - lo, 1.0), bins + 1)
    return edges


def bin_counts(values, edges):
    """Counts over right-closed bins ``(e_i, e_i+1]``; the first bin also takes ``e_0``."""
    idx = np.searchsorted(edges, values, side="left") - 1
    idx = np.clip(idx, 0, edges.size - 2)
    return np.bincount(idx, minlength=edges.size - 1)


def community_income_histograms(p, incomes: IncomeTable, node_ids, bins=DEFAULT_BINS):
    """Normalized income histograms on edges shared by every community.

    Returns ``(histograms, flagged)``: ``histograms`` maps community id to
    :class:`IncomeHistogram`; ``flagged`` lists communities with no income data.
    """
    by_comm = community_incomes(p, incomes, node_ids)
    present = [v for v in by_comm.values() if v.size]
    if not present:
        raise CommuneError("no community has income data")
    edges = shared_bin_edges(np.concatenate(present), bins)
    hists, flagged = {}, []
    for c, vals in sorted(by_comm.items()):
        if vals.size == 0:
            flagged.append(c)
            continue
        counts = bin_counts(vals, edges)
        hists[c] = IncomeHistogram(edges, counts / counts.sum(), int(vals.size))
    return hists, flagged


def js_divergence(p: IncomeHistogram, q: IncomeHistogram) -> float:
    """Jensen-Shannon divergence in bits, so the value lies in [0, 1]."""
    if p.bin_edges.shape != q.bin_edges.shape or not np.array_equal(p.bin_edges, q.bin_edges):
        raise CommuneError("histograms have different bin edges")
    return js_divergence_mass(p.mass, q.mass)


def js_divergence_mass(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / m[nz])))

    return float(min(1.0, max(0.0, 0.5 * kl(p) + 0.5 * kl(q))))


def community_medians(p, incomes: IncomeTable, node_ids) -> dict[int, float]:
    return {c: float(np.median(v)) for c, v in community_incomes(p, incomes, node_ids).items() if v.size}


def extreme_income_communities(p, incomes: IncomeTable, node_ids) -> tuple[int, int]:
    """``(highest, lowest)`` community by median tract income; ties go to the smaller id."""
    med = community_medians(p, incomes, node_ids)
    if len(med) < 2:
        raise CommuneError("need at least two communities with income data")
    high = min(med, key=lambda c: (-med[c], c))
    low = min((c for c in med if c != high), key=lambda c: (med[c], c))
    return high, low


def income_delta(p, incomes: IncomeTable, node_ids) -> float:
    med = community_medians(p, incomes, node_ids)
    high, low = extreme_income_communities(p, incomes, node_ids)
    return med[high] - med[low]


def build_report(city, method, g: CommuteGraph, p, incomes: IncomeTable, bins=DEFAULT_BINS, seed=0, truth=None):
    """Assemble modularity, extreme-community J-S divergence and income delta for one run.

    Partitions with fewer than two income-bearing communities still produce a
    report; the divergence fields are then 0.0 with ``divergence_available`` false.
    """
    part = p if isinstance(p, Partition) else Partition.from_labels(p)
    q = modularity(g, part)
    med = community_medians(part, incomes, g.node_ids)
    report = RunReport(
        city=city,
        method=method,
        k=int(part.k),
        modularity=q,
        js_divergence=0.0,
        income_delta_usd=0.0,
        community_sizes=part.sizes(),
        seed=int(seed),
        divergence_available=False,
        community_median_income={str(c): v for c, v in sorted(med.items())},
    )
    if len(med) >= 2:
        hists, _ = community_income_histograms(part, incomes, g.node_ids, bins)
        high, low = extreme_income_communities(part, incomes, g.node_ids)
        report.js_divergence = js_divergence(hists[high], hists[low])
        report.income_delta_usd = med[high] - med[low]
        report.high_income_community = high
        report.low_income_community = low
        report.divergence_available = True
    if truth is not None:
        report.nmi = nmi(part, truth)
    return report
