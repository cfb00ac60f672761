"""Structure-recovery metrics: confusion counts, F1 with an orientation penalty, SHD."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .graph import MixedGraph


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    wrong_dir: int
    undirected_pred: int
    f1: float
    shd: int
    ground_truth_kind: str

    def to_dict(self) -> dict:
        return asdict(self)


def f1_from_counts(tp: int, fp: int, fn: int, wrong_dir: int) -> float:
    """``2 tp / (2 tp + fp + fn + 2 wrong_dir)``; 1.0 when every count is zero."""
    den = 2 * tp + fp + fn + 2 * wrong_dir
    return 1.0 if den == 0 else 2 * tp / den


def shd_from_counts(fp: int, fn: int, wrong_dir: int) -> int:
    return fp + fn + wrong_dir


def _mark(g: MixedGraph, i: int, j: int) -> str | None:
    if g.is_undirected(i, j):
        return "-"
    if g.is_directed(i, j):
        return ">"
    if g.is_directed(j, i):
        return "<"
    return None


def _align(pred: MixedGraph, truth: MixedGraph) -> MixedGraph:
    if pred.p != truth.p or set(pred.labels) != set(truth.labels):
        raise ValueError(f"node sets differ: {pred.labels} vs {truth.labels}")
    if pred.labels == truth.labels:
        return pred
    perm = [pred.labels.index(s) for s in truth.labels]
    return MixedGraph.from_tail_matrix(pred.tails[np.ix_(perm, perm)], truth.labels)


def evaluate(predicted: MixedGraph, truth: MixedGraph, truth_kind: str = "dag") -> EvalReport:
    """Compare a predicted graph with the truth.

    A skeleton edge present in both graphs is a true positive when the
    marks agree and a wrong orientation otherwise.  Against a DAG an
    undirected prediction is therefore a wrong orientation; against a
    CPDAG an undirected truth edge must be predicted undirected.
    Nodes are matched by label.
    """
    if truth_kind not in ("dag", "cpdag"):
        raise ValueError(f"truth_kind must be 'dag' or 'cpdag', got {truth_kind!r}")
    if truth_kind == "dag" and truth.undirected_edges():
        raise ValueError("truth has undirected edges but truth_kind is 'dag'")
    pred = _align(predicted, truth)
    tp = fp = fn = wd = und = 0
    for i in range(truth.p):
        for j in range(i + 1, truth.p):
            mp, mt = _mark(pred, i, j), _mark(truth, i, j)
            if mp == "-":
                und += 1
            if mp is None and mt is None:
                continue
            if mt is None:
                fp += 1
            elif mp is None:
                fn += 1
            elif mp == mt:
                tp += 1
            else:
                wd += 1
    return EvalReport(tp, fp, fn, wd, und, f1_from_counts(tp, fp, fn, wd),
                      shd_from_counts(fp, fn, wd), truth_kind)
