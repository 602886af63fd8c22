from fractions import Fraction

import numpy as np
import pytest

from commune.cluster import Partition
from commune.communities import (
    brute_force_best_partition,
    modularity,
    nmi,
    optimize_modularity,
    set_partitions,
    single_move_gains,
)
from commune.errors import GraphError
from commune.graph import CommuteGraph

from conftest import random_graph
from oracles import modularity_by_pairs, nmi_loops

# frozen from oracles.best_modularity / modularity_by_pairs
TWO_TRIANGLES_Q = 5 / 14
BELL = [1, 1, 2, 5, 15, 52, 203, 877]


def test_single_community_zero(two_triangles):
    assert modularity(two_triangles, np.zeros(6, dtype=int)) == 0.0


def test_two_triangles_split(two_triangles):
    assert modularity(two_triangles, [0, 0, 0, 1, 1, 1]) == pytest.approx(TWO_TRIANGLES_Q, abs=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_modularity_matches_pair_sum(seed):
    g = random_graph(7, seed)
    labels = np.random.default_rng(seed).integers(0, 3, 7)
    ref = float(modularity_by_pairs(g.dense(), labels.tolist()))
    assert modularity(g, labels) == pytest.approx(ref, abs=1e-12)


def test_modularity_label_invariant():
    g = random_graph(10, 1)
    labels = np.random.default_rng(1).integers(0, 4, 10)
    assert modularity(g, labels) == pytest.approx(modularity(g, (labels + 7) * 3), abs=1e-15)


def test_zero_weight_graph_rejected():
    g = CommuteGraph.from_dense(np.zeros((3, 3)))
    with pytest.raises(GraphError):
        modularity(g, [0, 1, 2])
    with pytest.raises(GraphError):
        optimize_modularity(g)


def test_set_partition_counts():
    assert [sum(1 for _ in set_partitions(n)) for n in range(8)] == BELL


def test_brute_force_single_edge():
    g = CommuteGraph.from_dense([[0, 1], [1, 0]])
    p, q = brute_force_best_partition(g)
    assert p.k == 1 and q == 0
    assert modularity(g, [0, 1]) == -0.5


def test_brute_force_two_triangles(two_triangles):
    p, q = brute_force_best_partition(two_triangles)
    assert q == pytest.approx(TWO_TRIANGLES_Q, abs=1e-15)
    assert p.labels.tolist() == [0, 0, 0, 1, 1, 1]


def test_brute_force_four_cycle():
    w = np.zeros((4, 4))
    for i in range(4):
        w[i, (i + 1) % 4] = w[(i + 1) % 4, i] = 1
    g = CommuteGraph.from_dense(w)
    _, q = brute_force_best_partition(g)
    # adjacent pairs tie with the single community at 0; opposite pairs give -1/2
    assert q == pytest.approx(0.0, abs=1e-15)
    assert modularity(g, [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-15)
    assert modularity(g, [0, 1, 0, 1]) == pytest.approx(-0.5)


def test_brute_force_refuses_large():
    with pytest.raises(GraphError):
        brute_force_best_partition(random_graph(11, 0))


def test_optimizer_two_triangles(two_triangles):
    p = optimize_modularity(two_triangles)
    assert p.labels.tolist() == [0, 0, 0, 1, 1, 1]
    assert modularity(two_triangles, p) == pytest.approx(TWO_TRIANGLES_Q, abs=1e-15)


@pytest.mark.parametrize("n", [3, 5, 8])
def test_optimizer_complete_graph(n):
    g = CommuteGraph.from_dense(np.ones((n, n)) - np.eye(n))
    p = optimize_modularity(g)
    assert p.k == 1 and modularity(g, p) == 0


@pytest.mark.parametrize("seed", range(8))
def test_optimizer_locally_optimal(seed):
    g = random_graph(25, seed, density=0.15)
    p = optimize_modularity(g)
    gains = single_move_gains(g, p)
    assert gains.max() <= 1e-12


def test_single_move_gains_match_recomputation():
    g = random_graph(8, 3)
    p = Partition.from_labels([0, 0, 1, 1, 2, 2, 0, 1])
    gains = single_move_gains(g, p)
    q0 = modularity(g, p)
    for v in range(8):
        for c in range(p.k + 1):
            labels = p.labels.copy()
            labels[v] = c
            expected = 0.0 if c == p.labels[v] else modularity(g, labels) - q0
            if c == p.k and np.sum(p.labels == p.labels[v]) == 1:
                expected = 0.0
            assert gains[v, c] == pytest.approx(expected, abs=1e-12)


def test_max_k_caps_communities():
    g = random_graph(30, 2, density=0.1)
    free = optimize_modularity(g)
    assert free.k > 2
    assert optimize_modularity(g, max_k=2).k <= 2


def test_nmi_examples():
    a = [0, 0, 1, 1, 2]
    assert nmi(a, a) == pytest.approx(1.0, abs=1e-12)
    assert nmi([0, 0, 1, 1, 2], [5, 5, 3, 3, 4]) == pytest.approx(1.0)
    assert nmi(np.arange(6), np.zeros(6, dtype=int)) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_nmi_matches_loops(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 4, 30), rng.integers(0, 3, 30)
    assert nmi(a, b) == pytest.approx(nmi_loops(a.tolist(), b.tolist()), abs=1e-12)
    assert nmi(a, b) == pytest.approx(nmi(b, a), abs=1e-15)


def test_oracle_fraction_is_exact(two_triangles):
    assert modularity_by_pairs(two_triangles.dense(), [0, 0, 0, 1, 1, 1]) == Fraction(5, 14)
