"""Command-line interface: learn, orient-pair, simulate, bench, eval."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .data import DataError, DataMatrix
from .graph import GraphError, MixedGraph, cpdag_of_dag
from .metrics import evaluate
from .pipeline import (
    PipelineConfig,
    PipelineError,
    aggregate,
    bench,
    orient_pair,
    run_pipeline,
    write_rows,
)
from .simulate import load_structure, sample_data, spec_from_config

LOG_ENV = "SEQORIENT_LOG_LEVEL"
logger = logging.getLogger("seqorient")


def _pipeline_args(p: argparse.ArgumentParser) -> None:
    d = PipelineConfig()
    p.add_argument("--alpha1", type=float, default=d.alpha1)
    p.add_argument("--alpha2", type=float, default=d.alpha2)
    p.add_argument("--alpha", type=float, default=d.alpha_orient, help="orientation test level")
    p.add_argument("--alpha-prune", type=float, default=d.alpha_prune)
    p.add_argument("--delta", type=float, default=d.delta)
    p.add_argument("--variant", choices=("ss", "cv"), default=d.variant)
    p.add_argument("--ranking", choices=("partitioned", "global"), default=d.ranking)
    p.add_argument("--seed", type=int, default=d.seed)


def _config(args, **extra) -> PipelineConfig:
    return PipelineConfig(alpha1=args.alpha1, alpha2=args.alpha2, alpha_orient=args.alpha,
                          alpha_prune=args.alpha_prune, delta=args.delta, variant=args.variant,
                          seed=args.seed, ranking=args.ranking, **extra)


def _emit(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text)


def cmd_learn(args) -> int:
    data = DataMatrix.from_csv(args.data)
    g, trace = run_pipeline(data, _config(args, output_kind=args.output))
    _emit(g.to_json(indent=2), args.out)
    if args.report:
        Path(args.report).write_text(json.dumps(trace.to_dict(), indent=2))
    return 0


def cmd_orient_pair(args) -> int:
    data = DataMatrix.from_csv(args.data)
    cols = [c.strip() for c in args.cols.split(",")]
    if len(cols) != 2:
        raise DataError("--cols takes exactly two column names")
    for c in cols:
        if c not in data.names:
            raise DataError(f"no column {c!r}")
    res = orient_pair(data[cols[0]], data[cols[1]], _config(args), names=tuple(cols))
    o = res.outcome
    print(json.dumps({
        "decision": o.decision.value, "statistic": o.lr_stat, "p_value": o.p_value,
        "variance_ratio": o.variance_ratio, "forced_direction": res.forced,
        "loglik_ratio": res.loglik_ratio, "verdict": res.verdict,
    }, indent=2))
    return 0


def cmd_simulate(args) -> int:
    path = Path(args.spec)
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    spec = spec_from_config(cfg.get("sem", cfg), base=path.parent)
    data = sample_data(spec, args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.to_csv(out / "data.csv")
    dag = MixedGraph.from_tail_matrix(spec.dag.tails, data.names)
    (out / "truth.json").write_text(dag.to_json(indent=2))
    (out / "truth_cpdag.json").write_text(cpdag_of_dag(dag).to_json(indent=2))
    logger.info("wrote %d x %d samples to %s", data.n, data.p, out)
    return 0


def cmd_bench(args) -> int:
    path = Path(args.suite)
    with open(path, "rb") as fh:
        suite = tomllib.load(fh)
    rows = bench(suite, base=path.parent)
    write_rows(rows, args.out)
    if args.summary:
        agg = aggregate(rows)
        cols = list(agg[0]) if agg else ["setting", "replicates", "failed"]
        write_rows(agg, args.summary, cols)
    failed = sum(r["status"] != "ok" for r in rows)
    if failed:
        logger.warning("%d of %d replicates failed", failed, len(rows))
    return 0


def cmd_eval(args) -> int:
    rep = evaluate(load_structure(args.pred), load_structure(args.truth), args.truth_kind)
    print(json.dumps(rep.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqorient", description="Causal structure learning with "
                                 "sequential pairwise orientation of additive-noise edges.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a graph from a CSV file")
    p.add_argument("data")
    _pipeline_args(p)
    p.add_argument("--output", choices=("pdag", "dag"), default="dag")
    p.add_argument("--out", help="graph JSON path (default stdout)")
    p.add_argument("--report", help="write the per-stage trace as JSON")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("orient-pair", help="test the direction between two columns")
    p.add_argument("data")
    p.add_argument("--cols", required=True, help="x,y")
    _pipeline_args(p)
    p.set_defaults(func=cmd_orient_pair)

    p = sub.add_parser("simulate", help="sample a dataset from a SEM config")
    p.add_argument("--spec", required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True, help="per-replicate CSV")
    p.add_argument("--summary", help="per-setting means CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="compare a predicted graph with the truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--truth-kind", choices=("dag", "cpdag"), default="dag")
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (DataError, GraphError, ValueError, OSError, tomllib.TOMLDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
