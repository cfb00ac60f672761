"""Column-named sample tables and seeded train/test splits."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or unusable input data."""


class DataMatrix:
    """An ``n x p`` numeric table with column names.

    The sample correlation matrix is computed lazily and cached, since
    skeleton learning requests many partial correlations from it.
    """

    def __init__(self, values, names: Sequence[str] | None = None):
        x = np.asarray(values, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DataError("data must be two-dimensional")
        if not np.all(np.isfinite(x)):
            raise DataError("data contains NaN or infinite values")
        if names is None:
            names = [f"X{k}" for k in range(x.shape[1])]
        names = [str(s) for s in names]
        if len(names) != x.shape[1]:
            raise DataError(f"{len(names)} names for {x.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        self.values = x
        self.values.flags.writeable = False
        self.names = names
        self._corr = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, col) -> np.ndarray:
        if isinstance(col, str):
            col = self.names.index(col)
        return self.values[:, col]

    def corr(self) -> np.ndarray:
        if self._corr is None:
            sd = self.values.std(axis=0)
            if np.any(sd == 0):
                bad = [self.names[k] for k in np.flatnonzero(sd == 0)]
                raise DataError(f"constant columns: {bad}")
            self._corr = np.corrcoef(self.values, rowvar=False).reshape(self.p, self.p)
        return self._corr

    def subset(self, rows=None, cols=None) -> "DataMatrix":
        v = self.values
        names = self.names
        if rows is not None:
            v = v[rows]
        if cols is not None:
            cols = [self.names.index(c) if isinstance(c, str) else c for c in cols]
            v = v[:, cols]
            names = [names[c] for c in cols]
        return DataMatrix(v, names)

    @classmethod
    def from_csv(cls, path) -> "DataMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        rows = [r for r in rows if any(c.strip() for c in r)]
        if not rows:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in rows[0]]
        body = []
        for lineno, r in enumerate(rows[1:], 2):
            if len(r) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(r)}")
            try:
                body.append([float(c) for c in r])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
        return cls(np.array(body, dtype=float).reshape(len(body), len(header)), header)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.names)
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class Split:
    """A 50/50 partition of row indices into two halves.

    Fold 0 trains on ``a`` and tests on ``b``; fold 1 swaps them.
    """

    a: np.ndarray
    b: np.ndarray
    seed: int | None = field(default=None, compare=False)

    @classmethod
    def random(cls, n: int, seed=None) -> "Split":
        if n < 4:
            raise DataError("need at least 4 samples to split")
        perm = np.random.default_rng(seed).permutation(n)
        half = n // 2
        return cls(np.sort(perm[:half]), np.sort(perm[half:]), seed)

    def fold(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """``(train, test)`` index arrays for fold ``k``."""
        return (self.a, self.b) if k == 0 else (self.b, self.a)
