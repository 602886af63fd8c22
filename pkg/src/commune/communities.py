"""Weighted modularity, a shift/merge/split modularity optimizer, and partition agreement."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .cluster import Partition
from .errors import GraphError
from .graph import CommuteGraph

GAIN_TOL = 1e-12
BRUTE_FORCE_LIMIT = 10


def _labels(p):
    return p.labels if isinstance(p, Partition) else np.asarray(p, dtype=np.int64)


def modularity(g: CommuteGraph, p) -> float:
    """Newman modularity of a weighted undirected graph.

    Computed from the community-aggregated matrix ``S^T W S`` so that a single
    community yields exactly zero.
    """
    labels = _labels(p)
    if labels.shape != (g.n,):
        raise GraphError(f"partition covers {labels.size} nodes, graph has {g.n}")
    uniq, inv = np.unique(labels, return_inverse=True)
    s = sp.csr_matrix((np.ones(g.n), (np.arange(g.n), inv)), shape=(g.n, uniq.size))
    agg = (s.T @ g.weights @ s).toarray()
    two_m = agg.sum()
    if two_m <= 0:
        raise GraphError("modularity is undefined for a graph with zero total weight")
    e = np.diag(agg) / two_m
    a = agg.sum(axis=1) / two_m
    return float(np.sum(e - a * a))


def nmi(p1, p2) -> float:
    """Normalized mutual information with arithmetic-mean normalization."""
    l1, l2 = _labels(p1), _labels(p2)
    if l1.shape != l2.shape:
        raise ValueError("partitions cover different node counts")
    n = l1.size
    _, a = np.unique(l1, return_inverse=True)
    _, b = np.unique(l2, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1.0)
    ca, cb = table.sum(1), table.sum(0)
    h1 = -np.sum(ca / n * np.log(ca / n))
    h2 = -np.sum(cb / n * np.log(cb / n))
    i, j = np.nonzero(table)
    nij = table[i, j]
    # logs of counts kept separate so independent labellings cancel exactly
    mi = np.sum(nij * (np.log(nij) + np.log(n) - np.log(ca[i]) - np.log(cb[j]))) / n
    denom = 0.5 * (h1 + h2)
    if denom <= 0:
        return 1.0
    return float(min(1.0, max(0.0, mi / denom)))


# --------------------------------------------------------------------------- brute force


def set_partitions(n):
    """Yield every set partition of ``n`` items as a restricted growth string."""
    if n == 0:
        yield ()
        return
    a = [0] * n

    def rec(i, top):
        # top = max(a[:i])
        if i == n:
            yield tuple(a)
            return
        for v in range(top + 2):
            a[i] = v
            yield from rec(i + 1, max(top, v))

    yield from rec(1, 0)


def brute_force_best_partition(g: CommuteGraph):
    """Global modularity maximum by enumerating all set partitions (n <= 10)."""
    n = g.n
    if n > BRUTE_FORCE_LIMIT:
        raise GraphError(f"brute force refuses graphs with more than {BRUTE_FORCE_LIMIT} nodes")
    w = g.dense()
    k = w.sum(axis=1)
    two_m = w.sum()
    if two_m <= 0:
        raise GraphError("modularity is undefined for a graph with zero total weight")
    bmat = (w - np.outer(k, k) / two_m) / two_m
    parts = np.array(list(set_partitions(n)), dtype=np.int8)
    best_q, best = -np.inf, None
    for start in range(0, len(parts), 8192):
        chunk = parts[start:start + 8192]
        same = chunk[:, :, None] == chunk[:, None, :]
        q = np.einsum("pij,ij->p", same, bmat)
        i = int(np.argmax(q))
        if q[i] > best_q + GAIN_TOL:
            best_q, best = float(q[i]), chunk[i]
    part = Partition.from_labels(best)
    return part, modularity(g, part)


# --------------------------------------------------------------------------- optimizer


class _State:
    """Mutable partition with cached node-to-community weights."""

    def __init__(self, w, labels):
        self.w = w
        self.deg = w.sum(axis=1)
        self.two_m = self.deg.sum()
        self.m = self.two_m / 2.0
        self.labels = np.asarray(labels, dtype=np.int64).copy()
        self.next_id = int(self.labels.max()) + 1
        self.members = {c: np.flatnonzero(self.labels == c) for c in np.unique(self.labels)}
        self.tot = {c: float(self.deg[idx].sum()) for c, idx in self.members.items()}

    def comm_weight(self, nodes, c):
        idx = self.members.get(c)
        if idx is None or idx.size == 0:
            return np.zeros(len(nodes))
        return self.w[np.ix_(nodes, idx)].sum(axis=1)

    def move(self, nodes, src, dst):
        nodes = np.asarray(nodes, dtype=np.int64)
        self.labels[nodes] = dst
        moved = float(self.deg[nodes].sum())
        self.tot[src] -= moved
        self.tot[dst] = self.tot.get(dst, 0.0) + moved
        self.members[src] = np.setdiff1d(self.members[src], nodes)
        self.members[dst] = np.union1d(self.members.get(dst, np.empty(0, np.int64)), nodes)
        if self.members[src].size == 0:
            del self.members[src]
            del self.tot[src]
        if dst >= self.next_id:
            self.next_id = dst + 1


def _spectral_split(state: _State, bmat, src):
    """Leading-eigenvector bisection of ``src`` refined by single-node flips.

    Returns ``(gain, nodes)`` for moving ``nodes`` out of ``src`` into a new community.
    """
    nodes = state.members[src]
    if nodes.size < 2:
        return 0.0, nodes[:0]
    sub = bmat[np.ix_(nodes, nodes)]
    gen = sub - np.diag(sub.sum(axis=1))
    _, vecs = np.linalg.eigh(gen)
    v = vecs[:, -1]
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    x = np.where(v > 0, 1.0, -1.0)
    off = sub - np.diag(np.diag(sub))
    while True:
        flip = -x * (off @ x) / state.m
        # both sides must stay non-empty
        for side in (1.0, -1.0):
            if np.count_nonzero(x == side) == 1:
                flip[x == side] = -np.inf
        i = int(np.argmax(flip))
        if not flip[i] > GAIN_TOL:
            break
        x[i] = -x[i]
    moved = x > 0
    if moved.all() or not moved.any():
        return 0.0, nodes[:0]
    gain = -float(sub[np.ix_(moved, ~moved)].sum()) / state.m
    return gain, nodes[moved]


def _best_shift(state: _State, bmat, src, dst):
    """Kernighan-Lin style greedy transfer from ``src`` to ``dst``.

    Nodes move one at a time by best current gain, negative gains allowed; the
    best prefix of the sequence is returned as ``(gain, nodes)``.
    """
    nodes = state.members[src]
    tot_src = state.tot[src]
    tot_dst = state.tot.get(dst, 0.0)
    kv = state.deg[nodes]
    gains = (
        state.comm_weight(nodes, dst) - state.comm_weight(nodes, src) - kv * (tot_dst - tot_src + kv) / state.two_m
    ) / state.m
    limit = nodes.size - (1 if dst not in state.members else 0)
    if limit <= 0:
        return 0.0, nodes[:0]
    active = np.ones(nodes.size, dtype=bool)
    sub = bmat[np.ix_(nodes, nodes)]
    order = []
    cum, best_cum, best_len = 0.0, 0.0, 0
    for step in range(limit):
        g = np.where(active, gains, -np.inf)
        i = int(np.argmax(g))
        cum += gains[i]
        active[i] = False
        order.append(i)
        gains += (2.0 / state.m) * sub[:, i]
        if cum > best_cum + GAIN_TOL:
            best_cum, best_len = cum, step + 1
    return best_cum, nodes[np.asarray(order[:best_len], dtype=np.int64)]


def _refine_single_moves(state: _State, bmat, max_k=None):
    """Move single nodes to their best community (or a new one) until no move helps."""
    n = state.labels.size
    improved_any = False
    while True:
        improved = False
        for v in range(n):
            src = int(state.labels[v])
            comms = sorted(state.members)
            kv = state.deg[v]
            row = state.w[v]
            cw = np.array([row[state.members[c]].sum() for c in comms])
            tots = np.array([state.tot[c] for c in comms])
            si = comms.index(src)
            gains = (cw - cw[si] - kv * (tots - tots[si] + kv) / state.two_m) / state.m
            gains[si] = 0.0
            cand_ids = list(comms)
            if state.members[src].size > 1 and (max_k is None or len(comms) < max_k):
                gains = np.append(gains, (-cw[si] - kv * (-tots[si] + kv) / state.two_m) / state.m)
                cand_ids.append(state.next_id)
            j = int(np.argmax(gains))
            if gains[j] > GAIN_TOL:
                state.move([v], src, cand_ids[j])
                improved = improved_any = True
        if not improved:
            return improved_any


def _combo_rounds(state: _State, bmat, max_k=None):
    cache: dict = {}
    improved_any = False
    while True:
        comms = sorted(state.members)
        can_grow = max_k is None or len(comms) < max_k
        new_id = state.next_id
        dests = comms + ([new_id] if can_grow else [])
        best = (GAIN_TOL, None, None, None)
        # destination-major scan: ties keep the lowest destination id, then lowest source
        for dst in dests:
            for src in comms:
                if src == dst:
                    continue
                key = (src, dst if dst in state.members else "new")
                if key not in cache:
                    cache[key] = _best_shift(state, bmat, src, dst)
                    if key[1] == "new":
                        split = _spectral_split(state, bmat, src)
                        if split[0] > cache[key][0] + GAIN_TOL:
                            cache[key] = split
                gain, nodes = cache[key]
                if nodes.size and gain > best[0] + GAIN_TOL:
                    best = (gain, src, dst, nodes)
        if best[1] is None:
            return improved_any
        _, src, dst, nodes = best
        state.move(nodes, src, dst)
        improved_any = True
        touched = {src, dst}
        cache = {k: v for k, v in cache.items() if k[0] not in touched and k[1] not in touched}


def optimize_modularity(g: CommuteGraph, max_k: int | None = None) -> Partition:
    """Maximize modularity by repeated community-pair shifts, merges and splits.

    Starts from a single community. Each round evaluates, for every ordered
    pair of communities (including a fresh empty one), the best greedy transfer
    of a node subset and applies the single best. Transfers into the empty
    community also try a leading-eigenvector bisection refined by node flips. Whole-community transfers are
    merges; transfers into the empty community are splits. Single-node
    refinement follows, and the two phases alternate until neither improves,
    so the result is locally optimal under single-node moves.
    """
    if g.total_weight() <= 0:
        raise GraphError("modularity is undefined for a graph with zero total weight")
    if max_k is not None and max_k < 1:
        raise GraphError("max_k must be >= 1")
    w = g.dense()
    deg = w.sum(axis=1)
    two_m = deg.sum()
    bmat = w - np.outer(deg, deg) / two_m
    state = _State(w, np.zeros(g.n, dtype=np.int64))
    while True:
        a = _combo_rounds(state, bmat, max_k)
        b = _refine_single_moves(state, bmat, max_k)
        if not (a or b):
            break
    return Partition.from_labels(state.labels)


def single_move_gains(g: CommuteGraph, p) -> np.ndarray:
    """ΔQ of every single-node move: ``gains[v, c]`` for each existing community ``c``
    and a final column for moving ``v`` into a new singleton community."""
    labels = Partition.from_labels(_labels(p)).labels
    w = g.dense()
    deg = w.sum(axis=1)
    two_m = deg.sum()
    m = two_m / 2.0
    k = labels.max() + 1
    onehot = np.eye(k)[labels]
    cw = w @ onehot
    tot = deg @ onehot
    own_cw = cw[np.arange(g.n), labels]
    own_tot = tot[labels]
    gains = (cw - own_cw[:, None] - deg[:, None] * (tot[None, :] - own_tot[:, None] + deg[:, None]) / two_m) / m
    gains[np.arange(g.n), labels] = 0.0
    new = (-own_cw - deg * (-own_tot + deg) / two_m) / m
    sizes = np.bincount(labels)
    new[sizes[labels] == 1] = 0.0
    return np.column_stack([gains, new])
