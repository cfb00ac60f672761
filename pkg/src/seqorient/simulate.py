"""Synthetic additive-noise SEMs and random DAG structures."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import DataMatrix
from .graph import GraphError, MixedGraph

GP_JITTER = 1e-8
MLP_WIDTH = 200


def _piecewise(z):
    return np.where(z < 0, 0.5 * z, 2.0 * z)


def _sigmoid(z):
    # centered logistic with gain 3, i.e. tanh(1.5 z)
    return 2.0 / (1.0 + np.exp(-3.0 * z)) - 1.0


# functions applied to a standardized parent
FUNCTIONS = {
    "linear": lambda z: z,
    "cubic": lambda z: z**3,
    "arcsin": lambda z: np.arcsin(z / (1.0 + np.abs(z))),
    "piecewise": _piecewise,
    "exp": lambda z: np.exp(z / 2.0),
    "quadratic": lambda z: z**2,
    "sigmoid": _sigmoid,
}
INVERTIBLE = ("cubic", "arcsin", "piecewise", "exp")
MECHANISMS = ("linear", "invertible", "gp", "mlp") + tuple(k for k in FUNCTIONS if k != "linear")
NOISES = ("gaussian", "student_t", "laplace", "gumbel")


@dataclass(frozen=True)
class SemSpec:
    """Additive-noise SEM over a DAG.

    Each child is the sum over its parents of ``w * f(z)``, where ``z`` is
    the standardized parent column, plus centered noise scaled to a drawn
    standard deviation.  ``mechanism`` is ``"linear"``, ``"invertible"``
    (one of cubic / arcsin / piecewise / exp per edge), ``"gp"`` (a draw
    from a squared-exponential Gaussian process per edge), ``"mlp"``
    (one hidden sigmoid layer on all parents) or a single function name
    from :data:`FUNCTIONS`.
    """

    dag: MixedGraph
    mechanism: str = "invertible"
    noise: str = "gaussian"
    sigma_range: tuple = (0.5, 0.75)
    gp_bandwidth_range: tuple = (5.0, 5.25)
    weight_range: tuple = (0.5, 2.0)
    seed: int | None = 0

    def __post_init__(self):
        if not self.dag.is_dag():
            raise GraphError("SEM structure must be a DAG")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}; choose from {MECHANISMS}")
        if self.noise not in NOISES:
            raise ValueError(f"unknown noise {self.noise!r}; choose from {NOISES}")
        lo, hi = self.sigma_range
        if not 0 < lo <= hi:
            raise ValueError("sigma_range must be positive and ordered")

    def with_seed(self, seed) -> "SemSpec":
        return replace(self, seed=seed)


def _noise(kind: str, rng, n: int) -> np.ndarray:
    """Unit-variance, zero-mean noise of the given family."""
    if kind == "gaussian":
        return rng.standard_normal(n)
    if kind == "student_t":
        return rng.standard_t(5, n) / np.sqrt(5.0 / 3.0)
    if kind == "laplace":
        return rng.laplace(0.0, 1.0 / np.sqrt(2.0), n)
    g = rng.gumbel(0.0, 1.0, n)
    return (g - np.euler_gamma) / (np.pi / np.sqrt(6.0))


def se_kernel(x: np.ndarray, h: float) -> np.ndarray:
    d = x[:, None] - x[None, :]
    return np.exp(-d * d / h)


def gp_draw(x: np.ndarray, h: float, rng) -> np.ndarray:
    """One Gaussian-process sample path evaluated at ``x``."""
    k = se_kernel(x, h)
    z = rng.standard_normal(len(x))
    try:
        chol = np.linalg.cholesky(k + GP_JITTER * np.eye(len(x)))
        return chol @ z
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(k)
        return v @ (np.sqrt(np.clip(w, 0.0, None)) * z)


def _standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return (x - x.mean()) / sd if sd > 0 else x - x.mean()


def sample_data(spec: SemSpec, n: int) -> DataMatrix:
    """Ancestral sampling of ``n`` rows from ``spec``.

    Structural parameters (weights, functions, noise scales, bandwidths)
    are drawn from one child of the seed and the samples from another, so
    a given seed yields the same SEM for every ``n``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    g = spec.dag
    p = g.p
    par_ss, data_ss = np.random.SeedSequence(spec.seed).spawn(2)
    prng = np.random.default_rng(par_ss)
    rng = np.random.default_rng(data_ss)
    order = g.topological_order()
    sigma = prng.uniform(*spec.sigma_range, size=p)
    lo, hi = spec.weight_range
    edge = {}
    for a, b in sorted(g.directed_edges()):
        w = prng.uniform(lo, hi) * prng.choice([-1.0, 1.0])
        fn = INVERTIBLE[prng.integers(len(INVERTIBLE))] if spec.mechanism == "invertible" else spec.mechanism
        edge[(a, b)] = (w, fn, prng.uniform(*spec.gp_bandwidth_range))
    mlp = {}
    if spec.mechanism == "mlp":
        for k in range(p):
            pa = sorted(g.parents(k))
            if pa:
                mlp[k] = (prng.uniform(-1, 1, (MLP_WIDTH, len(pa))), prng.uniform(-1, 1, MLP_WIDTH))
    x = np.zeros((n, p))
    for k in order:
        pa = sorted(g.parents(k))
        val = sigma[k] * _noise(spec.noise, rng, n)
        if spec.mechanism == "mlp" and pa:
            z = np.column_stack([_standardize(x[:, a]) for a in pa])
            w1, w2 = mlp[k]
            val = val + (1.0 / (1.0 + np.exp(-z @ w1.T))) @ w2
        else:
            for a in pa:
                w, fn, h = edge[(a, k)]
                z = _standardize(x[:, a])
                if fn == "gp":
                    val = val + gp_draw(z, h, rng)
                else:
                    val = val + w * FUNCTIONS[fn](z)
        x[:, k] = val
    return DataMatrix(x, g.labels)


def random_dag(p: int, expected_degree: float, seed=None) -> MixedGraph:
    """Erdos-Renyi DAG: edges along a random order with probability ``degree / (p - 1)``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    rng = np.random.default_rng(seed)
    g = MixedGraph(p)
    if p == 1 or expected_degree <= 0:
        return g
    prob = min(1.0, expected_degree / (p - 1))
    perm = rng.permutation(p)
    for a in range(p):
        for b in range(a + 1, p):
            if rng.random() < prob:
                g.add_directed(int(perm[a]), int(perm[b]))
    return g


def load_structure(path) -> MixedGraph:
    """Read a graph from JSON (``.json``) or the edge-list format."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        try:
            return MixedGraph.from_json(text)
        except json.JSONDecodeError as e:
            raise GraphError(f"{path}: line {e.lineno}: {e.msg}") from None
    return MixedGraph.from_edgelist(text)


def spec_from_config(cfg: dict, base: Path | None = None) -> SemSpec:
    """Build a :class:`SemSpec` from a parsed TOML table.

    Keys: ``structure`` (path) or ``p`` with ``degree``; ``mechanism``,
    ``noise``, ``sigma_range``, ``gp_bandwidth_range``, ``weight_range``, ``seed``.
    """
    seed = cfg.get("seed", 0)
    if "structure" in cfg:
        path = Path(cfg["structure"])
        if base is not None and not path.is_absolute():
            path = base / path
        dag = load_structure(path)
    elif "p" in cfg:
        dag = random_dag(int(cfg["p"]), float(cfg.get("degree", 2.0)), cfg.get("structure_seed", seed))
    else:
        raise ValueError("config needs 'structure' or 'p'")
    kw = {k: tuple(cfg[k]) for k in ("sigma_range", "gp_bandwidth_range", "weight_range") if k in cfg}
    return SemSpec(dag, cfg.get("mechanism", "invertible"), cfg.get("noise", "gaussian"), seed=seed, **kw)
