import itertools

import numpy as np
import pytest

from seqorient.data import DataMatrix
from seqorient.graph import MixedGraph, cpdag_of_dag, meek_closure, v_structures
from seqorient.skeleton import initial_pdag, learn_skeleton

import oracles

EXAMPLE_DAG_EDGES = [(0, 1), (1, 2), (1, 3), (2, 3), (3, 4), (3, 5), (3, 6), (4, 5), (5, 6)]


def linear_sem(edges, p, n, rng, signed=False):
    # positive weights keep path effects from cancelling (faithful draws)
    x = np.zeros((n, p))
    order = range(p)  # edges go low -> high in every test structure
    for k in order:
        x[:, k] = rng.standard_normal(n)
        for a, b in edges:
            if b == k:
                w = rng.uniform(0.5, 1.0) * (rng.choice([-1, 1]) if signed else 1)
                x[:, k] += w * x[:, a]
    return x


def test_independent_columns_empty():
    hits = 0
    for seed in range(50):
        x = np.random.default_rng(seed).standard_normal((2000, 2))
        g, s = learn_skeleton(x, 0.05)
        if g.n_edges() == 0:
            hits += 1
            assert s.get(0, 1) == frozenset()
    assert hits >= 45


def test_chain_removes_ends():
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        x = linear_sem([(0, 1), (1, 2)], 3, 2000, rng, signed=True)
        g, s = learn_skeleton(x, 0.05)
        if sorted(g.undirected_edges()) == [(0, 1), (1, 2)] and s.get(0, 2) == frozenset({1}):
            hits += 1
    assert hits >= 45


def test_single_node():
    g, s = learn_skeleton(np.random.default_rng(0).standard_normal((30, 1)), 0.05)
    assert g.p == 1 and g.n_edges() == 0 and len(s) == 0


def test_bad_alpha():
    with pytest.raises(ValueError):
        learn_skeleton(np.zeros((10, 2)) + np.arange(20).reshape(10, 2), 1.5)


def test_sepset_bookkeeping():
    rng = np.random.default_rng(3)
    x = linear_sem(EXAMPLE_DAG_EDGES, 7, 1000, rng)
    g, s = learn_skeleton(x, 0.05)
    for i, j in itertools.combinations(range(7), 2):
        assert (s.get(i, j) is None) == g.adjacent(i, j)


def test_column_permutation_invariance():
    rng = np.random.default_rng(4)
    x = linear_sem(EXAMPLE_DAG_EDGES, 7, 500, rng)
    g, _ = learn_skeleton(x, 0.25)
    for trial in range(5):
        perm = rng.permutation(7)
        gp, _ = learn_skeleton(x[:, perm], 0.25)
        back = {tuple(sorted((int(perm[a]), int(perm[b])))) for a, b in gp.undirected_edges()}
        assert back == set(g.undirected_edges())


def test_alpha_monotone():
    rng = np.random.default_rng(5)
    x = linear_sem(EXAMPLE_DAG_EDGES, 7, 300, rng)
    x += 0.3 * rng.standard_normal(x.shape)
    r = initial_pdag(x, 0.01, 0.25)
    strict = set(r.skeleton.undirected_edges())
    loose = set(r.skeleton_alpha2.undirected_edges())
    assert strict <= loose
    assert r.candidate_edges == loose - strict
    assert all(r.sepsets.get(i, j) is not None for i, j in r.candidate_edges)


def test_equal_alphas_plain_pc():
    rng = np.random.default_rng(6)
    x = linear_sem(EXAMPLE_DAG_EDGES, 7, 1000, rng)
    r = initial_pdag(x, 0.05, 0.05)
    assert r.candidate_edges == set()
    g, s = learn_skeleton(x, 0.05)
    from seqorient.graph import detect_v_structures
    assert r.pdag == meek_closure(detect_v_structures(g, s))


def test_alpha_order_rejected():
    with pytest.raises(ValueError):
        initial_pdag(np.random.default_rng(0).standard_normal((50, 3)), 0.25, 0.05)


def test_fig_sem_skeleton_superset():
    # weights are screened so no true edge is nearly unfaithful at the population level
    truth = MixedGraph.from_edges(7, directed=EXAMPLE_DAG_EDGES)
    true_skel = {tuple(sorted(e)) for e in EXAMPLE_DAG_EDGES}
    hits = exact = 0
    rng = np.random.default_rng(100)
    for seed in range(30):
        B = oracles.faithful_linear_weights(EXAMPLE_DAG_EDGES, 7, rng)
        x = rng.standard_normal((2000, 7)) @ np.linalg.inv(np.eye(7) - B).T
        r = initial_pdag(DataMatrix(x), 0.05, 0.25)
        got = {tuple(sorted(e[:2])) for e in r.pdag.edges()}
        hits += true_skel <= got
        core = r.pdag.copy()
        for i, j in r.candidate_edges:
            core.remove_edge(i, j)
        exact += core == cpdag_of_dag(truth)
    assert hits >= 24
    assert exact >= 15


def test_independence_everywhere():
    # every pair survives level 0 with probability alpha at most
    kept = cand = 0
    reps = 60
    for seed in range(reps):
        x = np.random.default_rng(200 + seed).standard_normal((2000, 5))
        r = initial_pdag(x, 0.05, 0.25)
        assert not r.pdag.directed_edges() or v_structures(r.pdag)
        kept += r.skeleton.n_edges()
        cand += len(r.candidate_edges)
    assert kept / (10 * reps) <= 0.05 + 0.02
    assert (kept + cand) / (10 * reps) <= 0.25 + 0.04


def test_candidates_undirected_and_not_colliders():
    rng = np.random.default_rng(7)
    for _ in range(10):
        x = linear_sem(EXAMPLE_DAG_EDGES, 7, 200, rng)
        r = initial_pdag(x, 0.05, 0.5)
        for i, j in r.candidate_edges:
            assert r.pdag.is_undirected(i, j)
