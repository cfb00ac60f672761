"""End-to-end structure learning and the benchmark harness."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .data import DataError, DataMatrix
from .graph import MixedGraph
from .metrics import evaluate
from .orientation import (
    Decision,
    LrtOutcome,
    OrientLog,
    RegressionCache,
    likelihood_test,
    loglik_preference,
    orient_edges,
)
from .prune import RefineInfo, prune_edges, refine_to_dag
from .simulate import SemSpec, sample_data, spec_from_config
from .skeleton import initial_pdag

logger = logging.getLogger(__name__)

STAGES = ("initial", "orient", "prune", "refine")


class PipelineError(RuntimeError):
    """A stage of :func:`run_pipeline` failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    alpha1: float = 0.05
    alpha2: float = 0.25
    alpha_orient: float = 0.05
    alpha_prune: float = 1e-4
    delta: float = 0.01
    variant: str = "cv"
    output_kind: str = "dag"
    seed: int = 0
    ranking: str = "partitioned"

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha_orient", "alpha_prune"):
            a = getattr(self, name)
            if not 0 < a < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {a}")
        if not self.alpha2 > self.alpha1:
            raise ValueError(f"alpha2 ({self.alpha2}) must exceed alpha1 ({self.alpha1})")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.variant not in ("ss", "cv"):
            raise ValueError(f"variant must be 'ss' or 'cv', got {self.variant!r}")
        if self.output_kind not in ("pdag", "dag"):
            raise ValueError(f"output_kind must be 'pdag' or 'dag', got {self.output_kind!r}")
        if self.ranking not in ("partitioned", "global"):
            raise ValueError(f"ranking must be 'partitioned' or 'global', got {self.ranking!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown pipeline keys: {sorted(unknown)}")
        return cls(**d)

    def stage_seeds(self) -> dict[str, np.random.SeedSequence]:
        """Independent child seeds, one per stage, derived from ``seed``."""
        return dict(zip(STAGES, np.random.SeedSequence(self.seed).spawn(len(STAGES))))


@dataclass
class StageRecord:
    name: str
    graph: MixedGraph
    seconds: float
    info: dict = field(default_factory=dict)


@dataclass
class StageTrace:
    stages: list = field(default_factory=list)

    def __getitem__(self, name: str) -> StageRecord:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def names(self) -> list[str]:
        return [s.name for s in self.stages]

    def cumulative_seconds(self) -> list[float]:
        return list(np.cumsum([s.seconds for s in self.stages]))

    def to_dict(self) -> dict:
        return {"stages": [{"name": s.name, "seconds": s.seconds, "graph": s.graph.to_dict(),
                            "info": s.info} for s in self.stages]}


def _stage(trace: StageTrace, name: str, fn):
    t0 = time.perf_counter()
    try:
        g, info = fn()
    except Exception as e:  # noqa: BLE001 - re-raised with the stage tag
        raise PipelineError(name, e) from e
    trace.stages.append(StageRecord(name, g, time.perf_counter() - t0, info))
    logger.info("stage %s: %d edges (%d undirected) in %.2fs", name, g.n_edges(),
                len(g.undirected_edges()), trace.stages[-1].seconds)
    return g


def _split_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def run_pipeline(data, cfg: PipelineConfig = PipelineConfig()) -> tuple[MixedGraph, StageTrace]:
    """Learn a graph from ``data``.

    Stages: two-threshold initial PDAG, sequential orientation, pruning,
    and (for ``output_kind="dag"``) completion to a DAG.  Orientation and
    completion share one regression cache and train/test split.

    Returns
    -------
    graph : MixedGraph
        Labeled with the data's column names.
    trace : StageTrace
        Per-stage graph snapshots, timings and diagnostics.

    Raises
    ------
    PipelineError
        Carries the failing stage name.
    """
    data = data if isinstance(data, DataMatrix) else DataMatrix(data)
    seeds = cfg.stage_seeds()
    trace = StageTrace()
    labels = data.names

    def s1():
        res = initial_pdag(data, cfg.alpha1, cfg.alpha2)
        g = MixedGraph.from_tail_matrix(res.pdag.tails, labels)
        return g, {"candidate_edges": sorted(map(list, res.candidate_edges)), "v_conflicts": res.conflicts}

    g1 = _stage(trace, "initial", s1)
    cache = None

    def s2():
        nonlocal cache
        cache = RegressionCache(data, _split_seed(seeds["orient"]))
        log = OrientLog()
        g = orient_edges(cache, g1, cfg.alpha_orient, cfg.variant, cfg.ranking, cfg.delta, log=log)
        return g, {"tests": log.tests, "oriented": [list(e) for e in log.oriented], "conflicts": log.conflicts}

    g2 = _stage(trace, "orient", s2)

    def s3():
        g, rep = prune_edges(data, g2, cfg.alpha_prune)
        return g, rep.to_dict()

    g3 = _stage(trace, "prune", s3)
    if cfg.output_kind == "pdag":
        return g3.copy(), trace

    def s4():
        info = RefineInfo()
        g = refine_to_dag(cache, g3, cfg.alpha_orient, cfg.variant, cfg.delta, cfg.ranking, info=info)
        return g, {"forced": [list(e) for e in info.forced], "fallback": info.fallback}

    g4 = _stage(trace, "refine", s4)
    return g4.copy(), trace


# ---------------------------------------------------------------------
# Bivariate direction
# ---------------------------------------------------------------------

@dataclass
class PairResult:
    outcome: LrtOutcome
    forced: str  # "x->y" or "y->x", from the sign of the summed log-likelihood ratio
    loglik_ratio: float
    verdict: str


def orient_pair(x, y, cfg: PipelineConfig = PipelineConfig(), names=("x", "y")) -> PairResult:
    """Likelihood-ratio direction test for two columns with no other parents."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DataError("columns differ in length")
    for name, v in zip(names, (x, y)):
        if v.size < 4 or np.ptp(v) == 0:
            raise DataError(f"column {name} is degenerate")
    data = DataMatrix(np.column_stack([x, y]), list(names))
    cache = RegressionCache(data, _split_seed(cfg.stage_seeds()["orient"]))
    g = MixedGraph.from_edges(2, undirected=[(0, 1)])
    out = likelihood_test(cache, g, 0, 1, cfg.alpha_orient, cfg.variant, cfg.delta)
    lr = loglik_preference(cache, g, 0, 1, cfg.variant)
    a, b = names
    forced = f"{a}->{b}" if lr >= 0 else f"{b}->{a}"
    if out.decision == Decision.FORWARD:
        verdict = f"{a} -> {b} (p = {out.p_value:.3g})"
    elif out.decision == Decision.BACKWARD:
        verdict = f"{b} -> {a} (p = {out.p_value:.3g})"
    elif out.decision == Decision.INDISTINGUISHABLE:
        verdict = f"indistinguishable; larger likelihood for {forced}"
    else:
        verdict = f"undetermined (p = {out.p_value:.3g}); larger likelihood for {forced}"
    return PairResult(out, forced, lr, verdict)


# ---------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------

METRIC_KEYS = ("f1", "tp", "fp", "fn", "wrong_dir", "shd")
BASE_COLUMNS = ("setting", "replicate", "seed", "n", "p", "n_true_edges", "status", "seconds")


def bench_columns() -> list[str]:
    return list(BASE_COLUMNS) + [f"{s}_{k}" for s in STAGES for k in METRIC_KEYS]


@dataclass(frozen=True)
class BenchSetting:
    """One benchmark cell: a SEM family, sample size and replicate count."""

    name: str
    sem: dict
    n: int = 1000
    replicates: int = 25
    seed: int = 0
    pipeline: PipelineConfig = PipelineConfig()

    def replicate_seed(self, r: int) -> int:
        return int(np.random.SeedSequence([self.seed, r]).generate_state(1)[0])

    def replicate_spec(self, r: int, base: Path | None = None) -> SemSpec:
        s = self.replicate_seed(r)
        cfg = dict(self.sem, seed=s)
        if "structure" not in cfg:
            cfg["structure_seed"] = s
        return spec_from_config(cfg, base)


def parse_suite(suite: dict) -> list[BenchSetting]:
    """Settings from a parsed suite table.

    The suite has an optional ``[pipeline]`` table of defaults and a list
    ``[[setting]]``; each setting holds SEM keys (see
    :func:`seqorient.simulate.spec_from_config`) plus ``name``, ``n``,
    ``N`` (replicates), ``seed`` and an optional nested ``pipeline`` table.
    """
    defaults = dict(suite.get("pipeline", {}))
    out = []
    for k, s in enumerate(suite.get("setting", [])):
        s = dict(s)
        pipe = PipelineConfig.from_dict({**defaults, **s.pop("pipeline", {})})
        name = s.pop("name", f"setting{k}")
        n = int(s.pop("n", 1000))
        reps = int(s.pop("N", 25))
        seed = int(s.pop("seed", k))
        if reps < 0 or n < 4:
            raise ValueError(f"setting {name}: need N >= 0 and n >= 4")
        out.append(BenchSetting(name, s, n, reps, seed, pipe))
    return out


def run_replicate(setting: BenchSetting, r: int, base: Path | None = None) -> dict:
    seed = setting.replicate_seed(r)
    row = {c: "" for c in bench_columns()}
    row.update(setting=setting.name, replicate=r, seed=seed, n=setting.n)
    t0 = time.perf_counter()
    try:
        spec = setting.replicate_spec(r, base)
        row.update(p=spec.dag.p, n_true_edges=spec.dag.n_edges())
        data = sample_data(spec, setting.n)
        _, trace = run_pipeline(data, replace(setting.pipeline, seed=seed))
        truth = MixedGraph.from_tail_matrix(spec.dag.tails, data.names)
        for st in trace.stages:
            rep = asdict(evaluate(st.graph, truth, "dag"))
            for k in METRIC_KEYS:
                row[f"{st.name}_{k}"] = rep[k]
        row["status"] = "ok"
    except Exception as e:  # noqa: BLE001 - a failed replicate must not stop the suite
        logger.error("setting %s replicate %d failed: %s", setting.name, r, e)
        row["status"] = f"error: {type(e).__name__}: {e}"
    row["seconds"] = round(time.perf_counter() - t0, 3)
    return row


def bench(suite, base: Path | None = None) -> list[dict]:
    """Run every replicate of every setting; one row per replicate."""
    settings = parse_suite(suite) if isinstance(suite, dict) else list(suite)
    rows = []
    for s in settings:
        for r in range(s.replicates):
            rows.append(run_replicate(s, r, base))
    return rows


def aggregate(rows: list[dict]) -> list[dict]:
    """Per-setting means of every stage metric over successful replicates."""
    out = []
    for name in dict.fromkeys(r["setting"] for r in rows):
        ok = [r for r in rows if r["setting"] == name and r["status"] == "ok"]
        agg = {"setting": name, "replicates": len(ok),
               "failed": sum(r["setting"] == name for r in rows) - len(ok)}
        for s in STAGES:
            for k in METRIC_KEYS:
                vals = [float(r[f"{s}_{k}"]) for r in ok if r[f"{s}_{k}"] != ""]
                agg[f"{s}_{k}"] = float(np.mean(vals)) if vals else float("nan")
        out.append(agg)
    return out


def write_rows(rows: list[dict], path, columns=None) -> None:
    columns = bench_columns() if columns is None else columns
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow(r)

