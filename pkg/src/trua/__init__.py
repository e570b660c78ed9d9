"""Task replication for user-defined availability on pilot-based grids.

Builds empirical reliability models from pilot-lifetime traces, filters
anomalous failure bursts, derives availability valleys, and replays traces
through the Random, Sorted, Valley and Spread selectors.
"""

from trua.anomaly_rrcf import DetectorConfig, HaltSchedule, RrcfForest, bin_failures, detect, filter_dataset
from trua.kernels import BACKEND
from trua.reliability import (
    EmpiricalLifetimeDist,
    NoSurvivors,
    TaskRequest,
    Unsatisfiable,
    build_lifetime_dist,
    combined_failure,
    conditional_failure_prob,
    min_replicas,
)
from trua.replay_sim import SimConfig, SimReport, enumerate_pool, run_simulation, task_outcome
from trua.selection import (
    PilotCandidate,
    SelectionResult,
    Status,
    apply_cap,
    select_random,
    select_sorted,
    select_spread,
    select_valley,
    spread_select,
)
from trua.trace_model import (
    PilotRecord,
    SyntheticTraceSpec,
    TerminationClass,
    TraceDataset,
    classify_expected,
    generate_synthetic,
    parse_trace,
    write_trace,
)
from trua.valley_builder import (
    FailureRateCurve,
    Valley,
    ValleyTable,
    compute_failure_curve,
    determine_valleys,
    parse_table,
    serialize_table,
)

__version__ = "0.1.0"

__all__ = [
    "apply_cap",
    "BACKEND",
    "bin_failures",
    "build_lifetime_dist",
    "classify_expected",
    "combined_failure",
    "compute_failure_curve",
    "conditional_failure_prob",
    "detect",
    "DetectorConfig",
    "determine_valleys",
    "EmpiricalLifetimeDist",
    "enumerate_pool",
    "FailureRateCurve",
    "filter_dataset",
    "generate_synthetic",
    "HaltSchedule",
    "min_replicas",
    "NoSurvivors",
    "parse_table",
    "parse_trace",
    "PilotCandidate",
    "PilotRecord",
    "RrcfForest",
    "run_simulation",
    "select_random",
    "select_sorted",
    "select_spread",
    "select_valley",
    "SelectionResult",
    "serialize_table",
    "SimConfig",
    "SimReport",
    "spread_select",
    "Status",
    "SyntheticTraceSpec",
    "task_outcome",
    "TaskRequest",
    "TerminationClass",
    "TraceDataset",
    "Unsatisfiable",
    "Valley",
    "ValleyTable",
    "write_trace",
]
