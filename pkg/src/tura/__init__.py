"""Tool-augmented agent orchestration: retrieval, DAG planning, execution, distillation."""

__version__ = "0.1.0"

from .decomposer import SubQuerySet, decompose
from .executor import AnswerConfig, ExecutionReport, Pipeline, answer, execute_plan
from .index import HashingEmbedder, ServerIndex, build_index
from .planner import Plan, SubTask, predict_makespan, schedule
from .registry import Registry, ServerDescriptor, load_registry
from .retriever import RetrievalConfig, RetrievalResult, retrieve_servers

__all__ = [
    "AnswerConfig",
    "ExecutionReport",
    "HashingEmbedder",
    "Pipeline",
    "Plan",
    "Registry",
    "RetrievalConfig",
    "RetrievalResult",
    "ServerDescriptor",
    "ServerIndex",
    "SubQuerySet",
    "SubTask",
    "__version__",
    "answer",
    "build_index",
    "decompose",
    "execute_plan",
    "load_registry",
    "predict_makespan",
    "retrieve_servers",
    "schedule",
]
