"""Synthetic benchmark: a 50-server fleet, seeded cases, and the metrics harness."""

from .corpus import (
    BENCH_DIM,
    DEFAULT_SIZES,
    MULTI_HOP,
    SIMPLE,
    BenchCase,
    BenchCorpus,
    CaseDecomposer,
    CorpusParams,
    ScriptedAugmenter,
    generate_benchmark,
    read_cases,
    write_cases,
)
from .harness import (
    CONFIGS,
    BenchIndexes,
    ConfigMetrics,
    FleetAgent,
    MakespanStats,
    MetricsReport,
    case_plan,
    eval_nq_sweep,
    eval_planner,
    eval_retrieval,
    makespan_checks,
    nq_checks,
    recall_precision,
    retrieval_checks,
)

__all__ = [
    "BENCH_DIM",
    "CONFIGS",
    "DEFAULT_SIZES",
    "MULTI_HOP",
    "SIMPLE",
    "BenchCase",
    "BenchCorpus",
    "BenchIndexes",
    "CaseDecomposer",
    "ConfigMetrics",
    "CorpusParams",
    "FleetAgent",
    "MakespanStats",
    "MetricsReport",
    "ScriptedAugmenter",
    "case_plan",
    "eval_nq_sweep",
    "eval_planner",
    "eval_retrieval",
    "generate_benchmark",
    "makespan_checks",
    "nq_checks",
    "read_cases",
    "recall_precision",
    "retrieval_checks",
    "write_cases",
]
