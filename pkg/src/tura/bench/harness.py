"""Metrics harness: retrieval ablations, the N_Q sweep, and planner makespans."""

from __future__ import annotations

import asyncio
import json
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from ..errors import BenchmarkError, ProviderError
from ..executor import ACTION_ONLY, ExecDeps, Limits, execute_plan
from ..index import MULTI_VECTOR, SINGLE_VECTOR, EmbeddingProvider, ServerIndex, build_index
from ..planner import Plan, plan_from_spec, predict_makespan
from ..prompts import EXECUTE_HEADER
from ..providers import TextGenerator
from ..registry import (
    DEFAULT_N_Q,
    Registry,
    ServerDescriptor,
    augment_server,
    build_augmented_document,
    build_doc_only_document,
)
from ..retriever import RetrievalConfig, RetrievalDeps, retrieve_servers
from ..sim.fleet import Fleet, LocalClient
from .corpus import MULTI_HOP, SIMPLE, BenchCase, CaseDecomposer

FULL = "full"
NO_DECOMPOSE = "no_decompose"
NO_AUGMENT = "no_augment"
DENSE_BASELINE = "dense_baseline"
SINGLE_VECTOR_CONFIG = "single_vector"
CONFIGS = (FULL, NO_DECOMPOSE, NO_AUGMENT, DENSE_BASELINE, SINGLE_VECTOR_CONFIG)

# name -> (decompose, which index)
_CONFIG_SPEC = {
    FULL: (True, "augmented"),
    NO_DECOMPOSE: (False, "augmented"),
    NO_AUGMENT: (True, "doc_only"),
    DENSE_BASELINE: (False, "doc_only"),
    SINGLE_VECTOR_CONFIG: (True, "augmented_single"),
}

RETRIEVAL_GAP = 0.03
MODE_GAP = 0.01
NQ_GAIN = 0.05
NQ_PLATEAU = 0.02


def recall_precision(retrieved: Sequence[str], truth: Iterable[str], k: int = 5) -> tuple[float, float]:
    """Recall@k and Precision@k for one case.

    Precision divides by ``min(k, |retrieved|)`` so small corpora are not penalised.
    """
    top = list(retrieved)[:k]
    truth = set(truth)
    if not truth:
        raise BenchmarkError("empty ground truth")
    hits = len(set(top) & truth)
    denom = min(k, len(top))
    return hits / len(truth), (hits / denom if denom else 0.0)


@dataclass
class ConfigMetrics:
    name: str
    recall_at_5: float
    precision_at_5: float
    cases: int
    by_complexity: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"recall_at_5": self.recall_at_5, "precision_at_5": self.precision_at_5,
                "cases": self.cases, "by_complexity": self.by_complexity}


@dataclass
class MakespanStats:
    sequential: float
    dag: float
    cases: int
    failures: int = 0
    predicted_sequential: float = 0.0
    predicted_dag: float = 0.0
    success_rate_sequential: float = 0.0
    success_rate_dag: float = 0.0

    @property
    def reduction(self) -> float:
        return 1.0 - self.dag / self.sequential if self.sequential > 0 else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "sequential_ms": self.sequential * 1000,
            "dag_ms": self.dag * 1000,
            "reduction_pct": self.reduction * 100,
            "predicted_sequential_ms": self.predicted_sequential * 1000,
            "predicted_dag_ms": self.predicted_dag * 1000,
            "success_rate_sequential": self.success_rate_sequential,
            "success_rate_dag": self.success_rate_dag,
            "cases": self.cases,
            "failures": self.failures,
        }


@dataclass
class MetricsReport:
    configs: dict[str, ConfigMetrics] = field(default_factory=dict)
    dumps: dict[str, list[list[str]]] = field(default_factory=dict)
    makespan: MakespanStats | None = None
    nq_curve: dict[int, float] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def recall_at_5(self) -> float:
        return self.configs[FULL].recall_at_5

    @property
    def precision_at_5(self) -> float:
        return self.configs[FULL].precision_at_5

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self, include_dumps: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "meta": self.meta,
            "configs": {k: v.to_dict() for k, v in self.configs.items()},
            "checks": self.checks,
        }
        if self.makespan is not None:
            out["makespan"] = self.makespan.to_dict()
        if self.nq_curve:
            out["nq_curve"] = {str(k): v for k, v in self.nq_curve.items()}
        if include_dumps:
            out["dumps"] = self.dumps
        return out

    def table(self) -> str:
        lines = []
        if self.configs:
            lines.append(f"{'config':<16}{'recall@5':>10}{'precision@5':>13}{'cases':>7}")
            for name, m in self.configs.items():
                lines.append(f"{name:<16}{m.recall_at_5:>10.4f}{m.precision_at_5:>13.4f}{m.cases:>7}")
        if self.nq_curve:
            lines.append("n_q  recall@5")
            lines += [f"{n:<5}{r:.4f}" for n, r in self.nq_curve.items()]
        if self.makespan is not None:
            m = self.makespan
            lines.append(f"sequential {m.sequential * 1000:.1f} ms  dag {m.dag * 1000:.1f} ms  "
                         f"reduction {m.reduction * 100:.1f}%")
        for name, ok in self.checks.items():
            lines.append(f"{'PASS' if ok else 'FAIL'}  {name}")
        return "\n".join(lines)


# --------------------------------------------------------------------------- indexes


def augment_registry(registry: Registry, gen: TextGenerator, n_q: int = DEFAULT_N_Q,
                     temperature: float = 1.2) -> list[ServerDescriptor]:
    return [augment_server(d, gen, n_q, temperature) for d in registry.descriptors]


@dataclass
class BenchIndexes:
    embedder: EmbeddingProvider
    augmented: ServerIndex
    augmented_single: ServerIndex
    doc_only: ServerIndex

    @classmethod
    def build(cls, registry: Registry, augmenter: TextGenerator, embedder: EmbeddingProvider,
              n_q: int = DEFAULT_N_Q) -> "BenchIndexes":
        descs = augment_registry(registry, augmenter, n_q)
        docs = [build_augmented_document(d) for d in descs]
        return cls(
            embedder,
            build_index(docs, embedder, MULTI_VECTOR),
            build_index(docs, embedder, SINGLE_VECTOR),
            build_index([build_doc_only_document(d) for d in registry.descriptors],
                        embedder, MULTI_VECTOR),
        )

    def get(self, key: str) -> ServerIndex:
        return getattr(self, key)


def _summarize(name: str, cases: Sequence[BenchCase], retrieved: Sequence[Sequence[str]],
               k: int) -> ConfigMetrics:
    scores = [recall_precision(r, c.ground_truth_servers, k) for c, r in zip(cases, retrieved)]
    n = len(scores)
    by: dict[str, dict[str, float]] = {}
    for slice_name in (SIMPLE, MULTI_HOP):
        idx = [i for i, c in enumerate(cases) if c.complexity == slice_name]
        if idx:
            by[slice_name] = {
                "recall_at_5": sum(scores[i][0] for i in idx) / len(idx),
                "precision_at_5": sum(scores[i][1] for i in idx) / len(idx),
                "cases": len(idx),
            }
    return ConfigMetrics(name, sum(s[0] for s in scores) / n if n else 0.0,
                         sum(s[1] for s in scores) / n if n else 0.0, n, by)


def run_config(name: str, cases: Sequence[BenchCase], indexes: BenchIndexes, k: int = 5,
               top_n: int = 5, decomposer: TextGenerator | None = None) -> list[list[str]]:
    if name not in _CONFIG_SPEC:
        raise BenchmarkError(f"unknown config {name!r}; choose from {CONFIGS}")
    decompose_on, key = _CONFIG_SPEC[name]
    index = indexes.get(key)
    if index is None:
        raise BenchmarkError(f"missing index variant {key!r} for config {name!r}")
    deps = RetrievalDeps(index=index, embedder=indexes.embedder,
                         decomposer=decomposer or CaseDecomposer(cases))
    cfg = RetrievalConfig(k=k, top_n_per_subquery=top_n, decompose=decompose_on, augment=True)
    return [list(retrieve_servers(c.query, deps, cfg).server_ids) for c in cases]


def eval_retrieval(cases: Sequence[BenchCase], indexes: BenchIndexes,
                   configs: Sequence[str] = CONFIGS, k: int = 5, top_n: int = 5) -> MetricsReport:
    """Recall@k / Precision@k per ablation config, macro-averaged over cases."""
    report = MetricsReport(meta={"cases": len(cases), "k": k, "top_n_per_subquery": top_n,
                                 "dim": indexes.embedder.dim,
                                 "multi_intent_share": _multi_share(cases)})
    decomposer = CaseDecomposer(cases)
    for name in configs:
        dump = run_config(name, cases, indexes, k, top_n, decomposer)
        report.dumps[name] = dump
        report.configs[name] = _summarize(name, cases, dump, k)
    report.checks.update(retrieval_checks(report))
    return report


def _multi_share(cases: Sequence[BenchCase]) -> float:
    return sum(c.intent_count > 1 for c in cases) / len(cases) if cases else 0.0


def retrieval_checks(report: MetricsReport, gap: float = RETRIEVAL_GAP,
                     mode_gap: float = MODE_GAP) -> dict[str, bool]:
    r = {k: v.recall_at_5 for k, v in report.configs.items()}
    checks: dict[str, bool] = {}
    if {FULL, NO_AUGMENT} <= r.keys():
        checks["full > no_augment"] = r[FULL] - r[NO_AUGMENT] >= gap
    if {NO_AUGMENT, NO_DECOMPOSE} <= r.keys():
        checks["no_augment > no_decompose"] = r[NO_AUGMENT] - r[NO_DECOMPOSE] >= gap
    if {FULL, DENSE_BASELINE} <= r.keys():
        checks["full > dense_baseline"] = r[FULL] - r[DENSE_BASELINE] >= gap
    if {FULL, SINGLE_VECTOR_CONFIG} <= r.keys():
        checks["multi_vector >= single_vector"] = r[FULL] - r[SINGLE_VECTOR_CONFIG] >= mode_gap
    return checks


# --------------------------------------------------------------------------- N_Q sweep


def eval_nq_sweep(registry: Registry, augmenter: TextGenerator, cases: Sequence[BenchCase],
                  nq_values: Sequence[int], embedder: EmbeddingProvider, *,
                  decompose: bool = True, k: int = 5, top_n: int = 5) -> dict[int, float]:
    """Recall@k with the augmented index rebuilt at each N_Q.

    N_Q = 0 is the doc-only index, so the point coincides with ``no_augment``
    (or with ``dense_baseline`` when ``decompose`` is off).
    """
    decomposer = CaseDecomposer(cases)
    cfg = RetrievalConfig(k=k, top_n_per_subquery=top_n, decompose=decompose)
    curve: dict[int, float] = {}
    for n_q in nq_values:
        descs = augment_registry(registry, augmenter, n_q)
        index = build_index([build_augmented_document(d) for d in descs], embedder, MULTI_VECTOR)
        deps = RetrievalDeps(index=index, embedder=embedder, decomposer=decomposer)
        retrieved = [retrieve_servers(c.query, deps, cfg).server_ids for c in cases]
        curve[n_q] = _summarize(f"nq={n_q}", cases, retrieved, k).recall_at_5
    return curve


def nq_checks(curve: Mapping[int, float], gain: float = NQ_GAIN,
              plateau: float = NQ_PLATEAU) -> dict[str, bool]:
    checks = {}
    if 0 in curve and 20 in curve:
        checks["recall(N_Q=20) - recall(N_Q=0) >= 0.05"] = curve[20] - curve[0] >= gain
    if 20 in curve and 40 in curve:
        checks["|recall(N_Q=40) - recall(N_Q=20)| <= 0.02"] = abs(curve[40] - curve[20]) <= plateau
    return checks


# --------------------------------------------------------------------------- planner


_STEP = re.compile(r"^Current step: (\d+)$", re.MULTILINE)
_SERVER = re.compile(r"^Server: (.+)$", re.MULTILINE)
_QUERY = re.compile(r"^User Query: (.*)$", re.MULTILINE)


class FleetAgent:
    """A scripted agent for any fleet server: one tool call, then answer with its result.

    The call uses the first canned parameter set in the behavior table, or
    fills every required parameter from the task text when there is none.
    """

    def __init__(self, fleet: Fleet):
        self.fleet = fleet

    def _params(self, server_id: str, query: str) -> tuple[str, dict[str, Any]]:
        desc = self.fleet.registry[server_id]
        tool = desc.tools[0]
        table = self.fleet.behaviors.get(server_id, {}).get(tool.name, {})
        for key in table:
            if key != "*":
                return tool.name, json.loads(key)
        params: dict[str, Any] = {}
        for p in tool.parameters:
            if p.required:
                params[p.name] = p.values[0] if p.values else (1 if p.type in ("integer", "number") else query)
        return tool.name, params

    def generate(self, prompt: str, *, temperature: float | None = None) -> str:
        if EXECUTE_HEADER not in prompt:
            raise ProviderError("fleet agent only answers tool-execution prompts")
        step = int(_STEP.search(prompt).group(1))
        server = _SERVER.search(prompt).group(1)
        query = _QUERY.search(prompt).group(1)
        observation = None
        if "History:" in prompt:
            for line in prompt.split("History:\n", 1)[1].splitlines():
                if line.startswith("{"):
                    entry = json.loads(line)
                    observation = entry.get("observation", observation)
        if step > 1 and observation is not None:
            return json.dumps({"final": observation})
        tool, params = self._params(server, query)
        return json.dumps({"action": {"tool": tool, "params": params}})


def makespan_checks(stats: MakespanStats, tolerance: float = 0.10,
                    reduction_points: float = 0.05) -> dict[str, bool]:
    """Measured makespans against the latency-profile predictions."""
    def near(measured: float, predicted: float) -> bool:
        return abs(measured - predicted) <= tolerance * predicted

    predicted_reduction = (1.0 - stats.predicted_dag / stats.predicted_sequential
                           if stats.predicted_sequential > 0 else 0.0)
    return {
        "sequential makespan within 10% of prediction":
            near(stats.sequential, stats.predicted_sequential),
        "dag makespan within 10% of prediction": near(stats.dag, stats.predicted_dag),
        "reduction within 5 points of prediction":
            abs(stats.reduction - predicted_reduction) <= reduction_points,
        "equal success rate in both modes":
            stats.success_rate_sequential == stats.success_rate_dag,
    }


def case_plan(case: BenchCase, budget: float = 30.0) -> Plan:
    tasks = {f"T{i + 1}": (q, s) for i, (q, s) in enumerate(zip(case.sub_queries,
                                                               case.ground_truth_servers))}
    return plan_from_spec(tasks, case.dependencies, budget)


def task_latencies(plan: Plan, fleet: Fleet) -> dict[str, float]:
    out = {}
    for t in plan.tasks:
        tool = fleet.registry[t.server_id].tools[0].name
        out[t.task_id] = fleet.latency.delay(t.server_id, tool) if fleet.latency else 0.0
    return out


async def _measure(plan: Plan, deps: ExecDeps, limits: Limits,
                   workers: int | None) -> tuple[float, float, float, float]:
    seq = await execute_plan(plan, None, deps, ACTION_ONLY, limits=limits, workers=1)
    dag = await execute_plan(plan, None, deps, ACTION_ONLY, limits=limits, workers=workers)
    return seq.wall_makespan, dag.wall_makespan, seq.success_rate, dag.success_rate


async def eval_planner(plans: Sequence[Plan], fleet: Fleet, agent: TextGenerator | None = None, *,
                       concurrency: int = 8, workers: int | None = None,
                       limits: Limits | None = None) -> MakespanStats:
    """Run every plan forced-sequential (one worker) and as a DAG; average the wall makespans.

    ``workers`` limits the DAG run; ``None`` means unbounded.
    """
    if not plans:
        raise BenchmarkError("no plans to evaluate")
    deps = ExecDeps(agent or FleetAgent(fleet), LocalClient(fleet))
    limits = limits or Limits()
    gate = asyncio.Semaphore(concurrency)

    async def one(p: Plan):
        async with gate:
            return await _measure(p, deps, limits, workers)

    rows = await asyncio.gather(*(one(p) for p in plans), return_exceptions=True)
    ok = [r for r in rows if not isinstance(r, BaseException)]
    failures = len(rows) - len(ok)
    if not ok:
        raise BenchmarkError("every planner case failed")
    preds = [predict_makespan(p, task_latencies(p, fleet), workers)
             for p, r in zip(plans, rows) if not isinstance(r, BaseException)]
    n = len(ok)
    return MakespanStats(
        sequential=sum(r[0] for r in ok) / n,
        dag=sum(r[1] for r in ok) / n,
        cases=n,
        failures=failures,
        predicted_sequential=sum(p.sequential for p in preds) / n,
        predicted_dag=sum(p.parallel for p in preds) / n,
        success_rate_sequential=sum(r[2] for r in ok) / n,
        success_rate_dag=sum(r[3] for r in ok) / n,
    )
