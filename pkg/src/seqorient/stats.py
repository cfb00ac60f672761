"""Conditional-independence testing and discretized information measures."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import stats

from .data import DataError, DataMatrix

ENTROPY_FLOOR = 1e-12
PCOR_CLAMP = 1.0 - 1e-12


class NumericalError(ArithmeticError):
    """A numerical routine could not produce a finite answer."""


class DegenerateError(ValueError):
    """A column collapsed to a single value."""


@dataclass(frozen=True)
class CiTestResult:
    statistic: float
    p_value: float
    pcor: float
    cond_size: int


def partial_correlation(corr: np.ndarray, i: int, j: int, s: Iterable[int] = ()) -> float:
    """Partial correlation of ``i`` and ``j`` given ``s`` from a correlation matrix."""
    idx = [i, j] + sorted(s)
    sub = corr[np.ix_(idx, idx)]
    try:
        prec = np.linalg.inv(sub)
    except np.linalg.LinAlgError:
        raise NumericalError(f"singular correlation submatrix for pair ({i}, {j}) given {sorted(s)}") from None
    denom = prec[0, 0] * prec[1, 1]
    if not np.isfinite(denom) or denom <= 0:
        raise NumericalError(f"singular correlation submatrix for pair ({i}, {j}) given {sorted(s)}")
    return float(np.clip(-prec[0, 1] / np.sqrt(denom), -1.0, 1.0))


def fisher_z_test(data, i: int, j: int, s: Iterable[int] = ()) -> CiTestResult:
    """Fisher-z test of zero partial correlation between columns ``i`` and ``j`` given ``s``.

    Parameters
    ----------
    data : DataMatrix or array_like
        Samples in rows.
    i, j : int
        Column indices.
    s : iterable of int
        Conditioning columns.

    Returns
    -------
    CiTestResult
        Two-sided normal p-value of ``sqrt(n - |s| - 3) * atanh(pcor)``.
    """
    if not isinstance(data, DataMatrix):
        data = DataMatrix(data)
    s = sorted(int(k) for k in s)
    if i == j or i in s or j in s:
        raise ValueError("i, j must be distinct and outside the conditioning set")
    n = data.n
    if n <= len(s) + 3:
        raise ValueError(f"need n > |S| + 3, got n={n}, |S|={len(s)}")
    r = partial_correlation(data.corr(), i, j, s)
    rc = float(np.clip(r, -PCOR_CLAMP, PCOR_CLAMP))
    stat = np.sqrt(n - len(s) - 3) * np.arctanh(rc)
    p = float(2.0 * stats.norm.sf(abs(stat)))
    return CiTestResult(float(stat), min(1.0, p), r, len(s))


# ---------------------------------------------------------------------
# Discretization and information
# ---------------------------------------------------------------------

def default_bins(n: int, lo: int = 4, hi: int = 16) -> int:
    """Cube-root bin count clamped to ``[lo, hi]``."""
    return int(min(hi, max(lo, np.floor(np.cbrt(n) + 1e-9))))


@dataclass(frozen=True)
class Discretized:
    labels: np.ndarray
    edges: np.ndarray
    degenerate: bool

    @property
    def n_labels(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0


def discretize(x, bins: int | None = None) -> Discretized:
    """Equal-frequency binning.

    Cut points are the order statistics at positions ``k*n // bins``;
    repeated cut points collapse so tied values share a bin.
    """
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise DataError("column contains NaN or infinite values")
    n = len(x)
    if bins is None:
        bins = default_bins(n)
    if bins < 2:
        raise ValueError("need at least 2 bins")
    xs = np.sort(x)
    if n == 0 or xs[0] == xs[-1]:
        return Discretized(np.zeros(n, dtype=np.int64), np.empty(0), True)
    pos = (np.arange(1, bins) * n) // bins
    edges = np.unique(xs[pos])
    edges = edges[edges > xs[0]]
    labels = np.searchsorted(edges, x, side="right")
    return Discretized(labels.astype(np.int64), edges, len(edges) == 0)


@dataclass(frozen=True)
class DiscreteJoint:
    counts: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_labels(cls, a, b) -> "DiscreteJoint":
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        na, nb = int(a.max()) + 1, int(b.max()) + 1
        c = np.bincount(a * nb + b, minlength=na * nb).reshape(na, nb)
        return cls(c)


def _plogp_sum(counts: np.ndarray, n: float) -> float:
    c = counts[counts > 0].astype(float)
    return float(-(c / n * np.log(c / n)).sum())


def entropy(labels) -> float:
    """Plug-in entropy (nats) of integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        return 0.0
    return _plogp_sum(np.bincount(labels), len(labels))


def mutual_information(joint: DiscreteJoint) -> float:
    """Plug-in mutual information (nats) of a contingency table."""
    c = np.asarray(joint.counts, dtype=float)
    n = c.sum()
    if n <= 0:
        raise ValueError("empty table")
    mi = _plogp_sum(c.sum(axis=1), n) + _plogp_sum(c.sum(axis=0), n) - _plogp_sum(c, n)
    return max(mi, 0.0) if mi > -1e-12 else mi


def normalized_mi(x, y, bins: int | None = None) -> float:
    """Discretized mutual information divided by the smaller marginal entropy."""
    dx = discretize(x, bins)
    dy = discretize(y, bins)
    if dx.degenerate or dy.degenerate:
        raise DegenerateError("constant column after discretization")
    hx, hy = entropy(dx.labels), entropy(dy.labels)
    denom = max(min(hx, hy), ENTROPY_FLOOR)
    mi = mutual_information(DiscreteJoint.from_labels(dx.labels, dy.labels))
    return float(np.clip(mi / denom, 0.0, 1.0))
