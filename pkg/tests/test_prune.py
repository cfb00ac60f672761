import numpy as np
import pytest

from seqorient.graph import MixedGraph, cpdag_of_dag
from seqorient.orientation import Decision, RegressionCache
from seqorient.prune import RefineInfo, prune_edges, refine_to_dag, topological_completion

import oracles


def test_isolated_node_untouched():
    x = np.random.default_rng(0).standard_normal((100, 3))
    g = MixedGraph.from_edges(3, directed=[(0, 1)])
    out, rep = prune_edges(x, g, 1e-4)
    assert not out.adjacent(0, 2) and not out.adjacent(1, 2)
    assert all(e[0][:2] != (2, 2) for e in rep.kept)


def test_true_cubic_edge_retained():
    kept = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(1000)
        y = x**3 / 3 + rng.standard_normal(1000) * 0.6
        g = MixedGraph.from_edges(2, directed=[(0, 1)])
        out, rep = prune_edges(np.column_stack([x, y]), g, 1e-4)
        kept += out.is_directed(0, 1) and rep.kept[0][1] < 1e-4
    assert kept >= 19


def test_spurious_edge_removed():
    removed = 0
    for seed in range(20):
        x = np.random.default_rng(seed).standard_normal((1000, 2))
        g = MixedGraph.from_edges(2, undirected=[(0, 1)])
        out, rep = prune_edges(x, g, 1e-4)
        removed += not out.adjacent(0, 1)
    assert removed >= 19


def test_one_sided_significance_orients():
    # b significant for a only: prune orients b -> a
    g = MixedGraph.from_edges(2, undirected=[(0, 1)])
    x = np.random.default_rng(1).standard_normal((300, 2))
    import seqorient.prune as pr
    orig = pr.node_pvalues
    fake = {0: ({1: 1e-9}, []), 1: ({0: 0.5}, [])}
    pr.node_pvalues = lambda data, g, i, options=None: fake[i]
    try:
        out, rep = prune_edges(x, g, 1e-4)
    finally:
        pr.node_pvalues = orig
    assert out.is_directed(1, 0)
    assert rep.oriented == [(1, 0)]


def test_never_adds_or_flips():
    rng = np.random.default_rng(2)
    for _ in range(15):
        p = 5
        dag = MixedGraph.from_tail_matrix(oracles.random_dag_matrix(rng, p, 0.5))
        x = rng.standard_normal((300, p))
        for k in dag.topological_order():
            for a in dag.parents(k):
                x[:, k] += np.tanh(x[:, a]) * rng.uniform(0, 1.5)
        g = cpdag_of_dag(dag)
        out, _ = prune_edges(x, g, 1e-3)
        for a, b in out.directed_edges():
            assert g.adjacent(a, b) and not g.is_directed(b, a)
        for a, b in out.undirected_edges():
            assert g.is_undirected(a, b)


def test_alpha_extremes_and_monotone():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((400, 4))
    x[:, 1] += 0.15 * x[:, 0]
    x[:, 3] += 0.1 * x[:, 2] ** 2
    g = MixedGraph.from_edges(4, directed=[(0, 1), (2, 3), (0, 3), (1, 2)])
    counts = []
    for a in [1.0, 0.5, 0.1, 1e-2, 1e-4, 0.0]:
        _, rep = prune_edges(x, g, a)
        counts.append(len(rep.removed))
    # removal rule is p > alpha: alpha = 1 removes nothing, alpha = 0 every edge with p > 0
    assert counts[0] == 0 and counts[-1] == 4
    assert counts == sorted(counts)


def test_screening_reported():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((30, 6))
    g = MixedGraph.from_edges(6, directed=[(k, 5) for k in range(5)])
    out, rep = prune_edges(x, g, 1e-4)
    assert len(rep.screened) == 2
    for k, i in rep.screened:
        assert out.is_directed(k, i)


def test_failed_fit_keeps_edges(caplog):
    rng = np.random.default_rng(5)
    a = rng.standard_normal(100)
    x = np.column_stack([a, a, rng.standard_normal(100)])
    g = MixedGraph.from_edges(3, directed=[(0, 2), (1, 2)])
    out, rep = prune_edges(x, g, 1e-4)
    assert rep.skipped_nodes == [2]
    assert out == g


# -- refinement --------------------------------------------------------

def test_refine_dag_identity():
    dag = MixedGraph.from_edges(3, directed=[(0, 1), (1, 2)])
    assert refine_to_dag(None, dag) == dag


def test_refine_forces_sign():
    g = MixedGraph.from_edges(2, undirected=[(0, 1)])
    info = RefineInfo()
    out = refine_to_dag(None, g, score_fn=lambda *a: 0.0, test_fn=lambda *a: Decision.UNDIRECTED,
                        pref_fn=lambda h, i, j: 0.3 if (i, j) == (0, 1) else -0.3, info=info)
    assert out.is_directed(0, 1)
    assert info.forced == [(0, 1)] and info.fallback is None


def test_refine_random_pdags_give_dags():
    rng = np.random.default_rng(6)
    for _ in range(100):
        p = int(rng.integers(2, 8))
        dag = MixedGraph.from_tail_matrix(oracles.random_dag_matrix(rng, p, 0.5))
        g = cpdag_of_dag(dag)
        # random extra undirected edges make the input a non-CPDAG PDAG
        for i in range(p):
            for j in range(i + 1, p):
                if not g.adjacent(i, j) and rng.random() < 0.2:
                    g.add_undirected(i, j)
        out = refine_to_dag(None, g, score_fn=lambda *a: rng.random(),
                            test_fn=lambda *a: Decision.UNDIRECTED,
                            pref_fn=lambda *a: rng.standard_normal())
        assert out.is_dag()
        assert np.array_equal(out.adjacency_matrix(), g.adjacency_matrix())


def test_refine_with_data():
    rng = np.random.default_rng(7)
    a = rng.standard_normal(600)
    b = a**2 + 0.5 * rng.standard_normal(600)
    c = np.sin(b) + 0.3 * rng.standard_normal(600)
    g = MixedGraph.from_edges(3, undirected=[(0, 1), (1, 2)])
    out = refine_to_dag(RegressionCache(np.column_stack([a, b, c]), 7), g)
    assert out.is_dag()


def test_topological_completion():
    g = MixedGraph.from_edges(4, directed=[(0, 1), (1, 2)], undirected=[(0, 2), (2, 3)])
    out = topological_completion(g)
    assert out.is_dag() and out.is_directed(0, 2)
