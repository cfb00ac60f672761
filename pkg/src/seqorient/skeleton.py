"""Skeleton learning (PC-stable with Fisher-z tests) and the initial PDAG."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import DataMatrix
from .graph import MixedGraph, SepsetTable, detect_v_structures, meek_closure
from .stats import fisher_z_test

logger = logging.getLogger(__name__)

MAX_COND_SIZE = 5


def default_cap(p: int) -> int:
    return max(0, min(p - 2, MAX_COND_SIZE))


def _as_data(data) -> DataMatrix:
    return data if isinstance(data, DataMatrix) else DataMatrix(data)


def learn_skeleton(data, alpha: float, start: MixedGraph | None = None,
                   cap: int | None = None, sepsets: SepsetTable | None = None):
    """Remove edges of ``start`` that test conditionally independent.

    Conditioning sets at level ``l`` are drawn from the adjacency
    snapshot taken at the start of that level, so the surviving edge set
    does not depend on column order.

    Parameters
    ----------
    data : DataMatrix or array_like
    alpha : float
        An edge is removed at the first conditioning set with ``p > alpha``.
    start : MixedGraph, optional
        Undirected starting graph; the complete graph by default.
    cap : int, optional
        Largest conditioning-set size, ``min(p - 2, 5)`` by default.
    sepsets : SepsetTable, optional
        Table to extend; a new one is created otherwise.

    Returns
    -------
    (MixedGraph, SepsetTable)
    """
    data = _as_data(data)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    p = data.p
    if start is None:
        g = MixedGraph(data.names)
        for i, j in itertools.combinations(range(p), 2):
            g.add_undirected(i, j)
    else:
        if start.p != p:
            raise ValueError(f"start graph has {start.p} nodes, data has {p} columns")
        if start.directed_edges():
            raise ValueError("start graph must be undirected")
        g = start.copy()
    sepsets = SepsetTable() if sepsets is None else sepsets
    cap = default_cap(p) if cap is None else cap
    n_tests = 0
    for level in range(cap + 1):
        adj = g.adjacency_matrix()
        frozen = [np.flatnonzero(adj[i]).tolist() for i in range(p)]
        if all(len(a) - 1 < level for a in frozen):
            break
        removed = []
        for i, j in g.undirected_edges():
            found = None
            for a, b in ((i, j), (j, i)):
                pool = [k for k in frozen[a] if k != b]
                if len(pool) < level:
                    continue
                for s in itertools.combinations(pool, level):
                    n_tests += 1
                    if fisher_z_test(data, i, j, s).p_value > alpha:
                        found = s
                        break
                if found is not None:
                    break
            if found is not None:
                removed.append((i, j, found))
        for i, j, s in removed:
            g.remove_edge(i, j)
            sepsets.set(i, j, s)
    logger.debug("skeleton at alpha=%g: %d edges after %d tests", alpha, g.n_edges(), n_tests)
    return g, sepsets


@dataclass
class InitialGraphResult:
    pdag: MixedGraph
    candidate_edges: set
    sepsets: SepsetTable
    alpha1: float
    alpha2: float
    skeleton_alpha2: MixedGraph
    conflicts: int = 0
    skeleton: MixedGraph | None = field(default=None, repr=False)


def initial_pdag(data, alpha1: float = 0.05, alpha2: float = 0.25,
                 cap: int | None = None) -> InitialGraphResult:
    """Two-threshold initial graph.

    The skeleton is first learned at the relaxed level ``alpha2``; removal
    then continues at ``alpha1`` from that graph.  Colliders and Meek's
    rules are applied to the stricter skeleton and the edges that only
    survived at ``alpha2`` are added back as undirected candidates.
    """
    if alpha2 < alpha1:
        raise ValueError(f"alpha2 ({alpha2}) must not be smaller than alpha1 ({alpha1})")
    data = _as_data(data)
    loose, seps = learn_skeleton(data, alpha2, cap=cap)
    if alpha1 == alpha2:
        strict, seps1 = loose.copy(), seps.copy()
    else:
        strict, seps1 = learn_skeleton(data, alpha1, start=loose, cap=cap, sepsets=seps.copy())
    g, conflicts = detect_v_structures(strict, seps1, return_conflicts=True)
    g = meek_closure(g)
    candidates = set()
    for i, j in loose.undirected_edges():
        if not strict.adjacent(i, j):
            candidates.add((i, j))
            g.add_undirected(i, j)
    return InitialGraphResult(g, candidates, seps1, alpha1, alpha2, loose, conflicts, strict)
