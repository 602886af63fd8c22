"""Reference implementations kept independent of the package.

Plain loops, exact fractions where possible, and numpy dense solvers. The frozen
constants in the test modules were produced by these functions.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import product

import numpy as np


def modularity_by_pairs(w, labels):
    """Q = (1/2m) sum_ij [w_ij - k_i k_j / 2m] delta(c_i, c_j), as an exact Fraction."""
    n = len(w)
    w = [[Fraction(x) for x in row] for row in w]
    k = [sum(row) for row in w]
    two_m = sum(k)
    q = Fraction(0)
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                q += w[i][j] - k[i] * k[j] / two_m
    return q / two_m


def all_partitions(n):
    """Every labelling of n nodes, canonicalized by first appearance (slow, small n only)."""
    seen = set()
    for labs in product(range(n), repeat=n):
        remap, out = {}, []
        for c in labs:
            remap.setdefault(c, len(remap))
            out.append(remap[c])
        t = tuple(out)
        if t not in seen:
            seen.add(t)
            yield t


def best_modularity(w):
    best = None
    for labs in all_partitions(len(w)):
        q = modularity_by_pairs(w, labs)
        if best is None or q > best[0]:
            best = (q, labs)
    return best


def two_triangles():
    w = np.zeros((6, 6))
    for i, j in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]:
        w[i, j] = w[j, i] = 1.0
    return w


def jsd_bits(p, q):
    js = 0.0
    for a, b in zip(p, q):
        m = 0.5 * (a + b)
        if a > 0:
            js += 0.5 * a * math.log2(a / m)
        if b > 0:
            js += 0.5 * b * math.log2(b / m)
    return js


def normalized_laplacian_dense(w):
    w = np.asarray(w, dtype=float)
    deg = w.sum(axis=1)
    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    lap = np.eye(len(w)) - inv[:, None] * w * inv[None, :]
    lap[deg == 0, deg == 0] = 0.0
    return lap


def return_probabilities(w, steps):
    """diag(P^t) for t = 1..steps by repeated matrix products."""
    w = np.asarray(w, dtype=float)
    deg = w.sum(axis=1)
    p = np.divide(w, deg[:, None], out=np.zeros_like(w), where=deg[:, None] > 0)
    out, cur = [], np.eye(len(w))
    for _ in range(steps):
        cur = cur @ p
        out.append(np.diag(cur).copy())
    return np.column_stack(out)


def nmi_loops(a, b):
    n = len(a)
    ca, cb = {}, {}
    joint = {}
    for x, y in zip(a, b):
        ca[x] = ca.get(x, 0) + 1
        cb[y] = cb.get(y, 0) + 1
        joint[x, y] = joint.get((x, y), 0) + 1
    ha = -sum(c / n * math.log(c / n) for c in ca.values())
    hb = -sum(c / n * math.log(c / n) for c in cb.values())
    mi = sum(c / n * math.log((c / n) / (ca[x] / n * cb[y] / n)) for (x, y), c in joint.items())
    if ha + hb == 0:
        return 1.0
    return mi / (0.5 * (ha + hb))


if __name__ == "__main__":
    w = two_triangles()
    print("two triangles split at bridge:", modularity_by_pairs(w, [0, 0, 0, 1, 1, 1]))
    print("two triangles optimum:", best_modularity(w))
    c4 = np.zeros((4, 4))
    for i in range(4):
        c4[i, (i + 1) % 4] = c4[(i + 1) % 4, i] = 1.0
    print("4-cycle optimum:", best_modularity(c4))
    print("4-cycle opposite pairs:", modularity_by_pairs(c4, [0, 1, 0, 1]))
    print("single edge optimum:", best_modularity(np.array([[0, 1], [1, 0]])))
    print("single edge split:", modularity_by_pairs(np.array([[0, 1], [1, 0]]), [0, 1]))
    print("jsd (1,0) vs (.5,.5):", round(jsd_bits([1, 0], [0.5, 0.5]), 10))
    path = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    print("path spectrum:", np.linalg.eigvalsh(normalized_laplacian_dense(path)))
    print("K4 spectrum:", np.linalg.eigvalsh(normalized_laplacian_dense(np.ones((4, 4)) - np.eye(4))))
    tri = np.ones((3, 3)) - np.eye(3)
    print("triangle return probs:", return_probabilities(tri, 2))
    print("ln 4:", math.log(4.0))
