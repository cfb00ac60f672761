"""Causal structure learning by sequential orientation of pairwise additive-noise edges."""
from .data import DataError, DataMatrix, Split
from .graph import (
    CycleError,
    GraphError,
    MixedGraph,
    SepsetTable,
    cpdag_of_dag,
    d_separated,
    extend_to_dag,
    meek_closure,
)
from .metrics import EvalReport, evaluate
from .orientation import (
    Decision,
    LrtOutcome,
    RegressionCache,
    likelihood_test,
    orient_edges,
    rank_edges,
    sequential_orientation_oracle,
)
from .pipeline import PipelineConfig, PipelineError, StageTrace, bench, orient_pair, run_pipeline
from .prune import prune_edges, refine_to_dag
from .simulate import SemSpec, load_structure, random_dag, sample_data
from .skeleton import initial_pdag, learn_skeleton

__version__ = "0.1.0"
