"""Edge pruning by additive-model term significance, and completion to a DAG."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import DataMatrix
from .gam import DEFAULT_OPTIONS, GamOptions, fit_additive, term_significance
from .graph import CycleError, MixedGraph, extend_to_dag, meek_closure, orient_common_nc
from .orientation import (
    DEFAULT_DELTA,
    OrientLog,
    RegressionCache,
    loglik_preference,
    orient_edges,
    rank_edges,
)
from .stats import DegenerateError, NumericalError

logger = logging.getLogger(__name__)


@dataclass
class PruneReport:
    alpha_prune: float
    removed: list = field(default_factory=list)
    kept: list = field(default_factory=list)
    oriented: list = field(default_factory=list)
    screened: list = field(default_factory=list)
    skipped_nodes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def edges(rows):
            return [{"a": int(a), "b": int(b), "type": kind, "p_value": None if p is None else float(p)}
                    for (a, b, kind), p in rows]
        return {
            "alpha_prune": self.alpha_prune,
            "removed": edges(self.removed),
            "kept": edges(self.kept),
            "oriented": [[int(a), int(b)] for a, b in self.oriented],
            "screened": [[int(a), int(b)] for a, b in self.screened],
            "skipped_nodes": [int(k) for k in self.skipped_nodes],
        }


def _screen(x: np.ndarray, i: int, preds: list[int], limit: int) -> tuple[list[int], list[int]]:
    """Keep the ``limit`` predictors with the largest marginal |correlation|."""
    if len(preds) <= limit:
        return preds, []
    c = np.abs([np.corrcoef(x[:, i], x[:, k])[0, 1] for k in preds])
    order = np.argsort(-np.nan_to_num(c), kind="stable")
    keep = sorted(preds[k] for k in order[:limit])
    return keep, sorted(set(preds) - set(keep))


def node_pvalues(data, g: MixedGraph, i: int, options: GamOptions = DEFAULT_OPTIONS):
    """Term p-values of node ``i`` regressed on its parents and neighbors.

    Returns ``(pvals, screened)`` where ``pvals`` maps predictor to p-value,
    or ``(None, [])`` if the fit failed.
    """
    x = data.values
    preds = sorted(g.parents(i) | g.neighbors(i))
    if not preds:
        return {}, []
    limit = max(1, data.n // 10)
    preds, screened = _screen(x, i, preds, limit)
    X = x[:, preds]
    try:
        m = fit_additive(x[:, i], X, names=[data.names[k] for k in preds], options=options)
        return {k: term_significance(m, x[:, i], X, pos, options=options) for pos, k in enumerate(preds)}, screened
    except (NumericalError, DegenerateError, np.linalg.LinAlgError, ValueError) as e:
        logger.warning("pruning model for node %s failed, edges kept: %s", data.names[i], e)
        return None, screened


def prune_edges(data, g: MixedGraph, alpha_prune: float = 1e-4,
                options: GamOptions = DEFAULT_OPTIONS) -> tuple[MixedGraph, PruneReport]:
    """Remove edges whose additive term is insignificant in the child's model.

    Every node is regressed on ``pa(i) | ne(i)`` using all rows.  A directed
    edge ``k -> i`` is removed when its term has ``p > alpha_prune``.  An
    undirected pair is removed when insignificant in both models, oriented
    toward the node whose model finds it significant when only one does,
    and kept otherwise.  All models are fitted before any edit.
    """
    data = data if isinstance(data, DataMatrix) else DataMatrix(data)
    report = PruneReport(alpha_prune)
    pv: dict[int, dict | None] = {}
    for i in range(g.p):
        pv[i], screened = node_pvalues(data, g, i, options)
        report.screened += [(k, i) for k in screened]
        if pv[i] is None:
            report.skipped_nodes.append(i)
    out = g.copy()

    def p_of(k, i):
        d = pv[i]
        return None if d is None else d.get(k)

    for k, i in g.directed_edges():
        p = p_of(k, i)
        edge = ((k, i, "directed"), p)
        if p is not None and p > alpha_prune:
            out.remove_edge(k, i)
            report.removed.append(edge)
        else:
            report.kept.append(edge)
    for a, b in g.undirected_edges():
        pa_, pb = p_of(b, a), p_of(a, b)  # b as predictor of a, a as predictor of b
        edge = (a, b, "undirected")
        if pa_ is None or pb is None:
            report.kept.append((edge, None))
            continue
        ins_a, ins_b = pa_ > alpha_prune, pb > alpha_prune
        if ins_a and ins_b:
            out.remove_edge(a, b)
            report.removed.append((edge, max(pa_, pb)))
            continue
        report.kept.append((edge, min(pa_, pb)))
        if ins_a != ins_b:
            child, parent = (a, b) if not ins_a else (b, a)
            try:
                out.orient(parent, child)
                report.oriented.append((parent, child))
            except CycleError:
                logger.info("pruning orientation %d -> %d skipped: cycle", parent, child)
    return out, report


# ---------------------------------------------------------------------
# Completion to a DAG
# ---------------------------------------------------------------------

@dataclass
class RefineInfo:
    forced: list = field(default_factory=list)
    fallback: str | None = None
    orient_log: OrientLog = field(default_factory=OrientLog)


def topological_completion(g: MixedGraph) -> MixedGraph:
    """Orient every undirected edge along a topological order of the directed part."""
    core = MixedGraph.from_edges(g.p, directed=g.directed_edges())
    order = core.topological_order()
    if order is None:
        raise CycleError("directed part is cyclic")
    pos = {v: k for k, v in enumerate(order)}
    out = g.copy()
    for a, b in g.undirected_edges():
        out.orient(*((a, b) if pos[a] < pos[b] else (b, a)))
    return out


def refine_to_dag(ctx, g: MixedGraph, alpha: float = 0.05, variant: str = "cv",
                  delta: float = DEFAULT_DELTA, ranking: str = "partitioned",
                  pref_fn=None, info: RefineInfo | None = None, **orient_kw) -> MixedGraph:
    """Turn a PDAG into a DAG.

    The orientation loop is run once more; every edge that is still
    undirected is then taken in ranked order and oriented toward the
    direction with the larger held-out log-likelihood, with the
    common-child rule and Meek's rules applied after each.  If that
    cannot finish, a consistent extension is tried and finally a
    topological completion of the directed part.

    Parameters
    ----------
    ctx : RegressionCache or DataMatrix
    g : MixedGraph
    pref_fn : callable, optional
        ``pref_fn(g, i, j) -> float``; positive means ``i -> j``.
    info : RefineInfo, optional
        Receives forced orientations and the fallback used.
    """
    info = RefineInfo() if info is None else info
    if not g.undirected_edges() and g.is_acyclic():
        return g.copy()
    if ctx is not None and not isinstance(ctx, RegressionCache):
        ctx = RegressionCache(ctx)
    h = orient_edges(ctx, g, alpha, variant, ranking, delta, log=info.orient_log, **orient_kw)
    if pref_fn is None:
        def pref_fn(gg, i, j):
            return loglik_preference(ctx, gg, i, j, variant)
    score_fn = orient_kw.get("score_fn")
    stuck = False
    while h.undirected_edges() and not stuck:
        ranked = rank_edges(ctx, h, ranking=ranking, score_fn=score_fn)
        stuck = True
        for s in ranked:
            i, j = s.pair
            first = (i, j) if pref_fn(h, i, j) >= 0 else (j, i)
            for a, b in (first, first[::-1]):
                try:
                    h2 = h.copy()
                    h2.orient(a, b)
                    h2 = meek_closure(orient_common_nc(h2, a, b))
                except CycleError:
                    continue
                h = h2
                info.forced.append((a, b))
                stuck = False
                break
            if not stuck:
                break
    if h.undirected_edges() or not h.is_acyclic():
        ext = extend_to_dag(h) if h.is_acyclic() else None
        if ext is not None:
            info.fallback = "extension"
            h = ext
        else:
            info.fallback = "topological"
            logger.warning("no consistent extension; completing along a topological order")
            h = topological_completion(h)
    return h
