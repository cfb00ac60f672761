"""Mixed graphs (DAG / PDAG / CPDAG) and structural algorithms.

Edges are stored in a boolean "tail" matrix ``t``: ``t[i, j]`` is True when
the edge between ``i`` and ``j`` carries a tail at ``i``.  Hence

* ``i -> j``  iff ``t[i, j] and not t[j, i]``
* ``i -- j``  iff ``t[i, j] and t[j, i]``
* no edge     iff neither is set.

Every pair therefore holds at most one mark and lookups are O(1).
"""
from __future__ import annotations

import itertools
import json
import logging
from collections import deque
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)

DIRECTED = "directed"
UNDIRECTED = "undirected"


class GraphError(Exception):
    """Structural error raised by graph operations."""


class CycleError(GraphError):
    """A mutation would close a directed cycle."""


class MixedGraph:
    """Graph with directed and undirected edges over nodes ``0..p-1``.

    Parameters
    ----------
    nodes : int or sequence of str
        Number of nodes, or their labels.
    """

    def __init__(self, nodes: int | Sequence[str]):
        if isinstance(nodes, (int, np.integer)):
            if nodes < 0:
                raise ValueError("node count must be non-negative")
            self.labels = [f"X{k}" for k in range(int(nodes))]
        else:
            self.labels = [str(s) for s in nodes]
            if len(set(self.labels)) != len(self.labels):
                raise ValueError("node labels must be unique")
        p = len(self.labels)
        self._t = np.zeros((p, p), dtype=bool)

    # -- construction -------------------------------------------------
    @classmethod
    def from_edges(cls, nodes, directed=(), undirected=()) -> "MixedGraph":
        g = cls(nodes)
        for a, b in undirected:
            g.add_undirected(a, b)
        for a, b in directed:
            g.add_directed(a, b)
        return g

    @classmethod
    def from_tail_matrix(cls, t, labels=None) -> "MixedGraph":
        t = np.asarray(t, dtype=bool)
        g = cls(labels if labels is not None else t.shape[0])
        if t.shape != g._t.shape or np.any(np.diag(t)):
            raise ValueError("tail matrix must be square with empty diagonal")
        g._t = t.copy()
        return g

    def copy(self) -> "MixedGraph":
        g = MixedGraph(self.labels)
        g._t = self._t.copy()
        return g

    @property
    def p(self) -> int:
        return len(self.labels)

    @property
    def tails(self) -> np.ndarray:
        """Read-only view of the tail matrix."""
        v = self._t.view()
        v.flags.writeable = False
        return v

    def index(self, node) -> int:
        if isinstance(node, str):
            try:
                return self.labels.index(node)
            except ValueError:
                raise ValueError(f"unknown node {node!r}") from None
        k = int(node)
        if not 0 <= k < self.p:
            raise ValueError(f"unknown node {node!r}")
        return k

    def _pair(self, i, j) -> tuple[int, int]:
        i, j = self.index(i), self.index(j)
        if i == j:
            raise ValueError("self-loops are not allowed")
        return i, j

    # -- mark queries -------------------------------------------------
    def adjacent(self, i, j) -> bool:
        i, j = self._pair(i, j)
        return bool(self._t[i, j] or self._t[j, i])

    def is_directed(self, i, j) -> bool:
        """True when the edge ``i -> j`` is present."""
        i, j = self._pair(i, j)
        return bool(self._t[i, j] and not self._t[j, i])

    def is_undirected(self, i, j) -> bool:
        i, j = self._pair(i, j)
        return bool(self._t[i, j] and self._t[j, i])

    def parents(self, i) -> set[int]:
        i = self.index(i)
        return set(np.flatnonzero(self._t[:, i] & ~self._t[i, :]).tolist())

    def children(self, i) -> set[int]:
        i = self.index(i)
        return set(np.flatnonzero(self._t[i, :] & ~self._t[:, i]).tolist())

    def neighbors(self, i) -> set[int]:
        """Nodes joined to ``i`` by an undirected edge."""
        i = self.index(i)
        return set(np.flatnonzero(self._t[i, :] & self._t[:, i]).tolist())

    def nc(self, i) -> set[int]:
        """Neighbors and children of ``i``."""
        i = self.index(i)
        return set(np.flatnonzero(self._t[i, :]).tolist())

    def adjacents(self, i) -> set[int]:
        i = self.index(i)
        return set(np.flatnonzero(self._t[i, :] | self._t[:, i]).tolist())

    def adjacency_matrix(self) -> np.ndarray:
        return self._t | self._t.T

    def directed_edges(self) -> list[tuple[int, int]]:
        d = self._t & ~self._t.T
        return [(int(a), int(b)) for a, b in zip(*np.nonzero(d))]

    def undirected_edges(self) -> list[tuple[int, int]]:
        """Undirected edges as ``(i, j)`` with ``i < j`` in ascending order."""
        u = np.triu(self._t & self._t.T, 1)
        return [(int(a), int(b)) for a, b in zip(*np.nonzero(u))]

    def edges(self) -> Iterator[tuple[int, int, str]]:
        """All edges as ``(a, b, kind)`` in ascending unordered-pair order."""
        adj = np.triu(self.adjacency_matrix(), 1)
        for i, j in zip(*np.nonzero(adj)):
            i, j = int(i), int(j)
            if self._t[i, j] and self._t[j, i]:
                yield i, j, UNDIRECTED
            elif self._t[i, j]:
                yield i, j, DIRECTED
            else:
                yield j, i, DIRECTED

    def n_edges(self) -> int:
        return int(np.triu(self.adjacency_matrix(), 1).sum())

    def skeleton(self) -> "MixedGraph":
        g = MixedGraph(self.labels)
        g._t = self.adjacency_matrix()
        return g

    # -- mutation -----------------------------------------------------
    def add_undirected(self, i, j) -> None:
        i, j = self._pair(i, j)
        if self.adjacent(i, j):
            raise GraphError(f"pair ({i}, {j}) already has an edge")
        self._t[i, j] = self._t[j, i] = True

    def add_directed(self, i, j) -> None:
        i, j = self._pair(i, j)
        if self.adjacent(i, j):
            raise GraphError(f"pair ({i}, {j}) already has an edge")
        if self.has_directed_path(j, i):
            raise CycleError(f"{i} -> {j} closes a directed cycle")
        self._t[i, j] = True

    def orient(self, i, j) -> None:
        """Set the mark of an existing edge to ``i -> j``."""
        i, j = self._pair(i, j)
        if not self.adjacent(i, j):
            raise GraphError(f"pair ({i}, {j}) has no edge")
        if self.is_directed(i, j):
            return
        old = self._t[j, i]
        self._t[j, i] = False
        self._t[i, j] = False
        if self.has_directed_path(j, i):
            self._t[j, i] = old
            self._t[i, j] = True
            raise CycleError(f"{i} -> {j} closes a directed cycle")
        self._t[i, j] = True

    def unorient(self, i, j) -> None:
        i, j = self._pair(i, j)
        if not self.adjacent(i, j):
            raise GraphError(f"pair ({i}, {j}) has no edge")
        self._t[i, j] = self._t[j, i] = True

    def remove_edge(self, i, j) -> None:
        i, j = self._pair(i, j)
        self._t[i, j] = self._t[j, i] = False

    # -- acyclicity ---------------------------------------------------
    def has_directed_path(self, a, b) -> bool:
        """True if a directed path ``a -> ... -> b`` exists (length >= 1)."""
        a, b = self.index(a), self.index(b)
        d = self._t & ~self._t.T
        seen = np.zeros(self.p, dtype=bool)
        stack = [a]
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(d[u]):
                if v == b:
                    return True
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        return False

    def topological_order(self) -> list[int] | None:
        """Topological order of the directed part, or None if it is cyclic."""
        d = (self._t & ~self._t.T).astype(int)
        indeg = d.sum(axis=0)
        queue = deque(int(k) for k in np.flatnonzero(indeg == 0))
        order = []
        while queue:
            u = queue.popleft()
            order.append(u)
            for v in np.flatnonzero(d[u]):
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue.append(int(v))
        return order if len(order) == self.p else None

    def is_acyclic(self) -> bool:
        return self.topological_order() is not None

    def is_dag(self) -> bool:
        return not self.undirected_edges() and self.is_acyclic()

    # -- comparison / io ------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, MixedGraph):
            return NotImplemented
        return self.p == other.p and bool(np.array_equal(self._t, other._t))

    def __hash__(self):
        return hash(self._t.tobytes())

    def __repr__(self) -> str:
        parts = []
        for a, b, kind in self.edges():
            arrow = "->" if kind == DIRECTED else "--"
            parts.append(f"{self.labels[a]}{arrow}{self.labels[b]}")
        return f"MixedGraph({', '.join(parts)})"

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.labels),
            "edges": [{"a": a, "b": b, "type": kind} for a, b, kind in self.edges()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixedGraph":
        g = cls(d["nodes"])
        for e in d["edges"]:
            kind = e.get("type", DIRECTED)
            if kind == DIRECTED:
                g.add_directed(e["a"], e["b"])
            elif kind == UNDIRECTED:
                g.add_undirected(e["a"], e["b"])
            else:
                raise GraphError(f"unknown edge type {kind!r}")
        return g

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "MixedGraph":
        return cls.from_dict(json.loads(text))

    def to_edgelist(self) -> str:
        lines = []
        for a, b, kind in self.edges():
            arrow = "->" if kind == DIRECTED else "--"
            lines.append(f"{self.labels[a]} {arrow} {self.labels[b]}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_edgelist(cls, text: str, nodes: Sequence[str] | None = None) -> "MixedGraph":
        """Parse ``a -> b`` / ``a -- b`` lines; ``#`` starts a comment.

        Node labels come from ``nodes`` if given, else from first appearance.
        """
        parsed = []
        labels = list(nodes) if nodes is not None else []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for arrow, kind in (("->", DIRECTED), ("--", UNDIRECTED)):
                if arrow in line:
                    a, b = (s.strip() for s in line.split(arrow, 1))
                    break
            else:
                raise GraphError(f"line {lineno}: expected 'a -> b' or 'a -- b'")
            if not a or not b or "->" in b or "--" in b:
                raise GraphError(f"line {lineno}: malformed edge {raw!r}")
            for s in (a, b):
                if s not in labels:
                    if nodes is not None:
                        raise GraphError(f"line {lineno}: unknown node {s!r}")
                    labels.append(s)
            parsed.append((lineno, a, b, kind))
        g = cls(labels)
        for lineno, a, b, kind in parsed:
            try:
                if kind == DIRECTED:
                    g.add_directed(a, b)
                else:
                    g.add_undirected(a, b)
            except GraphError as e:
                raise GraphError(f"line {lineno}: {e}") from None
        return g


class SepsetTable:
    """Separating sets keyed by unordered node pair."""

    def __init__(self):
        self._s: dict[tuple[int, int], frozenset[int]] = {}

    @staticmethod
    def _key(i, j):
        i, j = int(i), int(j)
        return (i, j) if i < j else (j, i)

    def set(self, i, j, s: Iterable[int]) -> None:
        self._s[self._key(i, j)] = frozenset(int(k) for k in s)

    def get(self, i, j) -> frozenset[int] | None:
        return self._s.get(self._key(i, j))

    def __contains__(self, pair) -> bool:
        return self._key(*pair) in self._s

    def __len__(self) -> int:
        return len(self._s)

    def discard(self, i, j) -> None:
        self._s.pop(self._key(i, j), None)

    def items(self):
        return sorted(self._s.items())

    def copy(self) -> "SepsetTable":
        t = SepsetTable()
        t._s = dict(self._s)
        return t

    def to_dict(self) -> dict:
        return {"sepsets": [{"a": a, "b": b, "set": sorted(s)} for (a, b), s in self.items()]}


# ---------------------------------------------------------------------
# Orientation rules
# ---------------------------------------------------------------------

def v_structures(g: MixedGraph) -> set[tuple[int, int, int]]:
    """Colliders ``(a, k, b)`` with ``a < b``, ``a -> k <- b``, a and b non-adjacent."""
    out = set()
    adj = g.adjacency_matrix()
    for k in range(g.p):
        pa = sorted(g.parents(k))
        for a, b in itertools.combinations(pa, 2):
            if not adj[a, b]:
                out.add((a, k, b))
    return out


def detect_v_structures(skeleton: MixedGraph, sepsets: SepsetTable,
                        return_conflicts: bool = False):
    """Orient ``i -> k <- j`` for unshielded triples with ``k`` outside ``S_ij``.

    Triples are visited in ascending ``(i, j, k)`` order.  When a later
    triple asks for a mark opposite to one already written, the first
    writer wins and the conflict is counted.
    """
    if skeleton.directed_edges():
        raise GraphError("skeleton must be fully undirected")
    g = skeleton.copy()
    adj = skeleton.adjacency_matrix()
    conflicts = 0
    for i, j in itertools.combinations(range(g.p), 2):
        if adj[i, j]:
            continue
        common = np.flatnonzero(adj[i] & adj[j])
        if len(common) == 0:
            continue
        s = sepsets.get(i, j)
        if s is None:
            raise GraphError(f"no separating set recorded for non-adjacent pair ({i}, {j})")
        for k in common:
            k = int(k)
            if k in s:
                continue
            for a in (i, j):
                if g.is_directed(a, k):
                    continue
                if g.is_directed(k, a):
                    conflicts += 1
                    continue
                try:
                    g.orient(a, k)
                except CycleError:
                    conflicts += 1
    if conflicts:
        logger.warning("%d conflicting collider orientations (first writer kept)", conflicts)
    return (g, conflicts) if return_conflicts else g


def _meek_candidate(g: MixedGraph, adj: np.ndarray, a: int, b: int, rules) -> bool:
    """Whether any selected rule orients the undirected edge ``a -- b`` as ``a -> b``."""
    t = g._t
    par = t & ~t.T  # par[x, y]: x -> y
    und = t & t.T
    if 1 in rules:
        # c -> a -- b with c, b non-adjacent
        if np.any(par[:, a] & ~adj[:, b] & (np.arange(g.p) != b)):
            return True
    if 2 in rules:
        # a -> c -> b
        if np.any(par[a, :] & par[:, b]):
            return True
    if 3 in rules:
        # a -- c -> b, a -- d -> b, c and d non-adjacent
        cs = np.flatnonzero(und[a, :] & par[:, b])
        for c, d in itertools.combinations(cs, 2):
            if not adj[c, d]:
                return True
    if 4 in rules:
        # a -- c -> d -> b, a adjacent to d, c and b non-adjacent
        for c in np.flatnonzero(und[a, :]):
            if c == b or adj[c, b]:
                continue
            if np.any(par[c, :] & par[:, b] & adj[a, :]):
                return True
    return False


def meek_closure(g: MixedGraph, rules=(1, 2, 3, 4)) -> MixedGraph:
    """Apply the selected orientation rules until no edge changes.

    Each pass scans undirected edges in ascending ``(i, j)`` order and tries
    ``i -> j`` before ``j -> i``.  An orientation that would close a cycle
    is skipped (only possible for non-extendable inputs).
    """
    rules = frozenset(rules)
    if not rules <= {1, 2, 3, 4}:
        raise ValueError(f"unknown rules {sorted(rules)}")
    g = g.copy()
    adj = g.adjacency_matrix()
    changed = True
    while changed:
        changed = False
        for i, j in g.undirected_edges():
            if not g.is_undirected(i, j):
                continue
            for a, b in ((i, j), (j, i)):
                if _meek_candidate(g, adj, a, b, rules):
                    try:
                        g.orient(a, b)
                    except CycleError:
                        continue
                    changed = True
                    break
    return g


def meek_rule1(g: MixedGraph) -> tuple[MixedGraph, bool]:
    out = meek_closure(g, rules=(1,))
    return out, out != g


def orient_common_nc(g: MixedGraph, i, j) -> MixedGraph:
    """After ``i -> j``, orient ``i -> k`` and ``j -> k`` for all ``k`` in nc(i) ∩ nc(j).

    Raises
    ------
    CycleError
        If one of the orientations would close a directed cycle.
    """
    i, j = g._pair(i, j)
    out = g.copy()
    for k in sorted((g.nc(i) & g.nc(j)) - {i, j}):
        for a in (i, j):
            if out.is_undirected(a, k):
                out.orient(a, k)
    return out


# ---------------------------------------------------------------------
# Equivalence classes and extensions
# ---------------------------------------------------------------------

def cpdag_of_dag(dag: MixedGraph) -> MixedGraph:
    """Completed PDAG of the Markov equivalence class of ``dag``."""
    if not dag.is_dag():
        raise ValueError("input is not a DAG")
    g = dag.skeleton()
    for a, k, b in v_structures(dag):
        g._t[k, a] = False
        g._t[k, b] = False
    return meek_closure(g)


def undirected_components(g: MixedGraph) -> list[set[int]]:
    """Connected components of the undirected part, singletons omitted."""
    und = g._t & g._t.T
    _, lab = connected_components(und.astype(np.int8), directed=False)
    comps: dict[int, set[int]] = {}
    for v, c in enumerate(lab):
        comps.setdefault(int(c), set()).add(v)
    out = [c for c in comps.values() if len(c) > 1]
    return sorted(out, key=min)


def extend_to_dag(g: MixedGraph) -> MixedGraph | None:
    """Consistent DAG extension by sink elimination, or None if none exists."""
    if not g.is_acyclic():
        return None
    out = g.copy()
    t = g._t.copy()
    alive = np.ones(g.p, dtype=bool)
    for _ in range(g.p):
        found = False
        for x in np.flatnonzero(alive):
            und = t[x] & t[:, x] & alive
            outgoing = t[x] & ~t[:, x] & alive
            if outgoing.any():
                continue
            adj_x = (t[x] | t[:, x]) & alive
            ok = True
            for y in np.flatnonzero(und):
                others = adj_x.copy()
                others[y] = False
                adj_y = t[y] | t[:, y]
                if np.any(others & ~adj_y):
                    ok = False
                    break
            if not ok:
                continue
            for y in np.flatnonzero(und):
                out._t[x, int(y)] = False
            alive[x] = False
            found = True
            break
        if not found:
            return None
    return out


def d_separated(dag: MixedGraph, i, j, s: Iterable[int] = ()) -> bool:
    """d-separation of ``i`` and ``j`` given ``s`` by reachability.

    Balls travel from ``i``; ``j`` is d-separated iff no active trail
    reaches it.
    """
    i, j = dag._pair(i, j)
    z = {dag.index(k) for k in s}
    if i in z or j in z:
        raise ValueError("endpoints must not be in the conditioning set")
    # ancestors of z, including z
    anc = set(z)
    stack = list(z)
    while stack:
        u = stack.pop()
        for v in dag.parents(u):
            if v not in anc:
                anc.add(v)
                stack.append(v)
    pa = [dag.parents(k) for k in range(dag.p)]
    ch = [dag.children(k) for k in range(dag.p)]
    visited = set()
    todo = [(i, "up")]
    while todo:
        y, d = todo.pop()
        if (y, d) in visited:
            continue
        visited.add((y, d))
        if y == j and y not in z:
            return False
        if d == "up" and y not in z:
            todo.extend((w, "up") for w in pa[y])
            todo.extend((w, "down") for w in ch[y])
        elif d == "down":
            if y not in z:
                todo.extend((w, "down") for w in ch[y])
            if y in anc:
                todo.extend((w, "up") for w in pa[y])
    return True
