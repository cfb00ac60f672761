"""Independent brute-force references used by the tests."""
import itertools

import numpy as np

from seqorient.graph import MixedGraph


def all_dags(p):
    """Every labelled DAG on ``p`` nodes."""
    pairs = list(itertools.combinations(range(p), 2))
    for marks in itertools.product((0, 1, 2), repeat=len(pairs)):
        a = np.zeros((p, p), dtype=bool)
        for (i, j), m in zip(pairs, marks):
            if m == 1:
                a[i, j] = True
            elif m == 2:
                a[j, i] = True
        if _acyclic(a):
            yield MixedGraph.from_tail_matrix(a)


def _acyclic(a):
    a = a.copy()
    alive = list(range(len(a)))
    while alive:
        sinks = [k for k in alive if not a[k, alive].any()]
        if not sinks:
            return False
        for k in sinks:
            alive.remove(k)
    return True


def skeleton_and_colliders(dag_matrix):
    """(skeleton pairs, colliders) computed straight from an adjacency matrix."""
    a = np.asarray(dag_matrix, dtype=bool)
    p = len(a)
    skel = frozenset((i, j) for i in range(p) for j in range(i + 1, p) if a[i, j] or a[j, i])
    coll = set()
    for k in range(p):
        for i, j in itertools.combinations(range(p), 2):
            if a[i, k] and a[j, k] and not a[i, j] and not a[j, i]:
                coll.add((i, k, j))
    return skel, frozenset(coll)


def mec_summary(dags):
    """Group DAG adjacency matrices by (skeleton, colliders).

    Returns a dict mapping each class key to the orientation summary:
    for each skeleton pair, the set of directions seen across the class.
    """
    classes = {}
    for d in dags:
        a = np.asarray(d.tails & ~d.tails.T)
        key = skeleton_and_colliders(a)
        classes.setdefault(key, []).append(a)
    return classes


def random_dag_matrix(rng, p, prob):
    perm = rng.permutation(p)
    a = np.zeros((p, p), dtype=bool)
    for x in range(p):
        for y in range(x + 1, p):
            if rng.random() < prob:
                a[perm[x], perm[y]] = True
    return a


def moral_dsep(a, i, j, s):
    """d-separation via the moralized ancestral graph."""
    a = np.asarray(a, dtype=bool)
    p = len(a)
    keep = {i, j} | set(s)
    frontier = list(keep)
    while frontier:
        u = frontier.pop()
        for v in range(p):
            if a[v, u] and v not in keep:
                keep.add(v)
                frontier.append(v)
    und = set()
    for u in keep:
        pa = [v for v in keep if a[v, u]]
        for v in pa:
            und.add(frozenset((u, v)))
        for v, w in itertools.combinations(pa, 2):
            und.add(frozenset((v, w)))
    seen = {i}
    frontier = [i]
    while frontier:
        u = frontier.pop()
        for e in und:
            if u in e:
                (v,) = e - {u}
                if v in s or v in seen:
                    continue
                if v == j:
                    return False
                seen.add(v)
                frontier.append(v)
    return True


def dfs_components(g):
    p = g.p
    seen = [False] * p
    out = []
    for s in range(p):
        if seen[s]:
            continue
        comp = {s}
        seen[s] = True
        stack = [s]
        while stack:
            u = stack.pop()
            for v in range(p):
                if v != u and g.is_undirected(u, v) and not seen[v]:
                    seen[v] = True
                    comp.add(v)
                    stack.append(v)
        if len(comp) > 1:
            out.append(comp)
    return out


def min_true_pcor(B, edges, max_cond=5):
    """Smallest population |partial correlation| of a true edge over all conditioning sets.

    ``B[b, a]`` is the weight of ``a -> b`` in a unit-noise linear SEM.
    """
    from seqorient.stats import partial_correlation

    p = len(B)
    A = np.linalg.inv(np.eye(p) - B)
    S = A @ A.T
    d = np.sqrt(np.diag(S))
    C = S / np.outer(d, d)
    m = 1.0
    for a, b in edges:
        others = [k for k in range(p) if k not in (a, b)]
        for r in range(min(len(others), max_cond) + 1):
            for s in itertools.combinations(others, r):
                m = min(m, abs(partial_correlation(C, a, b, s)))
    return m


def faithful_linear_weights(edges, p, rng, tau=0.1):
    """Rejection-sample signed weights until every true edge keeps |pcor| >= tau."""
    while True:
        B = np.zeros((p, p))
        for a, b in edges:
            B[b, a] = rng.uniform(0.5, 1.0) * rng.choice([-1, 1])
        if min_true_pcor(B, edges) >= tau:
            return B
