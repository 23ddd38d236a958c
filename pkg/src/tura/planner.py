"""Complexity routing, DAG planning, wave scheduling and makespan prediction."""

from __future__ import annotations

import graphlib
import heapq
import logging
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any

from . import prompts
from .decomposer import SubQuerySet
from .errors import MakespanError, PlanValidationError, ProviderError, RoutingError, ScheduleError
from .providers import TextGenerator
from .registry import Registry
from .retriever import RetrievalResult

logger = logging.getLogger(__name__)

SIMPLE = "simple"
COMPLEX = "complex"
DEFAULT_ROUTE_THRESHOLD = 0.5
DEFAULT_BUDGET_S = 30.0

_ARROW = re.compile(r"^\s*([A-Za-z0-9_]+)\s*->\s*([A-Za-z0-9_]+)\s*$")
_NUM = re.compile(r"(\d+)")


def task_sort_key(task_id: str) -> tuple:
    """Natural order, so T2 sorts before T10."""
    return tuple(int(p) if p.isdigit() else p for p in _NUM.split(task_id))


@dataclass(frozen=True)
class SubTask:
    task_id: str
    refined_query: str
    server_id: str


@dataclass(frozen=True)
class Plan:
    kind: str  # "single" | "dag"
    tasks: tuple[SubTask, ...]
    edges: tuple[tuple[str, str], ...] = ()
    latency_budget: float = DEFAULT_BUDGET_S

    @property
    def task_map(self) -> dict[str, SubTask]:
        return {t.task_id: t for t in self.tasks}

    @property
    def task_ids(self) -> list[str]:
        return sorted((t.task_id for t in self.tasks), key=task_sort_key)

    def parents(self, task_id: str) -> list[str]:
        return sorted((a for a, b in self.edges if b == task_id), key=task_sort_key)

    def to_dict(self) -> dict[str, Any]:
        tm = self.task_map
        return {
            "kind": self.kind,
            "tasks": {tid: {"query": tm[tid].refined_query, "server": tm[tid].server_id}
                      for tid in self.task_ids},
            "dependency": [f"{a}->{b}" for a, b in self.edges],
            "latency_budget_ms": round(self.latency_budget * 1000),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Plan":
        tasks, edges = _tasks_and_edges(data)
        kind = data.get("kind", "single" if len(tasks) == 1 and not edges else "dag")
        budget = data.get("latency_budget_ms")
        return cls(kind, tasks, edges,
                   DEFAULT_BUDGET_S if budget is None else float(budget) / 1000)


@dataclass(frozen=True)
class Schedule:
    waves: tuple[tuple[str, ...], ...]

    def wave_of(self, task_id: str) -> int:
        for i, w in enumerate(self.waves):
            if task_id in w:
                return i
        raise KeyError(task_id)


@dataclass(frozen=True)
class Makespan:
    sequential: float
    parallel: float


# --------------------------------------------------------------------------- routing


def route(q: str, sqs: SubQuerySet, result: RetrievalResult,
          threshold: float = DEFAULT_ROUTE_THRESHOLD) -> str:
    """Simple iff there is one sub-query and the best server clears ``threshold``."""
    if not result.servers:
        raise RoutingError("no servers retrieved; nothing to plan over")
    if len(sqs.sub_queries) == 1 and result.servers[0][1] > threshold:
        return SIMPLE
    return COMPLEX


def llm_route(q: str, sqs: SubQuerySet, result: RetrievalResult, gen: TextGenerator,
              threshold: float = DEFAULT_ROUTE_THRESHOLD) -> str:
    """Ask a model for ``simple``/``complex``; unusable answers defer to :func:`route`."""
    if not result.servers:
        raise RoutingError("no servers retrieved; nothing to plan over")
    prompt = (
        "### Query routing\nAnswer with one word, simple or complex. A query is simple when "
        "a single tool call on one server answers it.\n\n"
        f"User Query: {q}\nSub-queries: {list(sqs.sub_queries)}\n"
        f"Candidate servers: {result.server_ids}\n"
    )
    try:
        word = gen.generate(prompt, temperature=0.0).strip().lower()
    except ProviderError:
        word = ""
    if word.startswith(SIMPLE):
        return SIMPLE
    if word.startswith(COMPLEX):
        return COMPLEX
    return route(q, sqs, result, threshold)


# --------------------------------------------------------------------------- plans


def _tasks_and_edges(data: Mapping[str, Any]) -> tuple[tuple[SubTask, ...], tuple[tuple[str, str], ...]]:
    raw_tasks = data.get("tasks")
    if not isinstance(raw_tasks, Mapping) or not raw_tasks:
        raise PlanValidationError('plan needs a non-empty "tasks" object')
    tasks = []
    for tid, body in raw_tasks.items():
        if isinstance(body, Mapping):
            query = body.get("query", body.get("description"))
            server = body.get("server", body.get("server_id"))
        else:
            raise PlanValidationError(f"task {tid} must be an object with query and server")
        if not isinstance(query, str) or not query.strip():
            raise PlanValidationError(f"task {tid} has an empty query")
        if not isinstance(server, str) or not server:
            raise PlanValidationError(f"task {tid} names no server")
        tasks.append(SubTask(str(tid), query.strip(), server))
    raw_deps = data.get("dependency", data.get("dependencies", []))
    if not isinstance(raw_deps, list):
        raise PlanValidationError('"dependency" must be a list of "Ta->Tb" strings')
    edges = []
    for dep in raw_deps:
        m = _ARROW.match(dep) if isinstance(dep, str) else None
        if m is None:
            raise PlanValidationError(f"bad dependency {dep!r}; expected 'Ta->Tb'")
        edge = (m.group(1), m.group(2))
        if edge not in edges:
            edges.append(edge)
    return tuple(tasks), tuple(edges)


def validate_plan(plan: Plan, result: RetrievalResult | None = None) -> None:
    """Raise :class:`PlanValidationError` unless ``plan`` is well formed."""
    ids = [t.task_id for t in plan.tasks]
    if not ids:
        raise PlanValidationError("plan has no tasks")
    if len(set(ids)) != len(ids):
        raise PlanValidationError("duplicate task ids")
    if plan.kind not in ("single", "dag"):
        raise PlanValidationError(f"unknown plan kind {plan.kind!r}")
    if plan.kind == "single" and (len(ids) != 1 or plan.edges):
        raise PlanValidationError("a single plan has exactly one task and no edges")
    for t in plan.tasks:
        if not t.refined_query.strip():
            raise PlanValidationError(f"task {t.task_id} has an empty query")
    if result is not None:
        allowed = set(result.server_ids)
        for t in plan.tasks:
            if t.server_id not in allowed:
                raise PlanValidationError(
                    f"task {t.task_id} uses server {t.server_id!r}, not among retrieved "
                    f"servers {sorted(allowed)}")
    idset = set(ids)
    for a, b in plan.edges:
        if a not in idset or b not in idset:
            raise PlanValidationError(f"dependency {a}->{b} references an unknown task")
        if a == b:
            raise PlanValidationError(f"dependency {a}->{b} is a self-loop")
    try:
        _sorter(plan).prepare()
    except graphlib.CycleError as exc:
        raise PlanValidationError(f"dependency cycle: {' -> '.join(exc.args[1])}") from None


def parse_plan(text: str, result: RetrievalResult | None = None,
               budget: float = DEFAULT_BUDGET_S) -> Plan:
    try:
        data = prompts.extract_json_object(text)
    except ValueError as exc:
        raise PlanValidationError(f"unparseable plan: {exc}") from None
    if not isinstance(data, Mapping):
        raise PlanValidationError("plan must be a JSON object")
    tasks, edges = _tasks_and_edges(data)
    plan = Plan("dag", tasks, edges, budget)
    validate_plan(plan, result)
    return plan


def single_plan(q: str, sqs: SubQuerySet, result: RetrievalResult,
                budget: float = DEFAULT_BUDGET_S) -> Plan:
    if not result.servers:
        raise RoutingError("no servers retrieved; nothing to plan over")
    query = sqs.sub_queries[0] if len(sqs.sub_queries) == 1 else q
    return Plan("single", (SubTask("T1", query, result.servers[0][0]),), (), budget)


def fallback_plan(sqs: SubQuerySet, result: RetrievalResult,
                  budget: float = DEFAULT_BUDGET_S) -> Plan:
    """One edge-free task per sub-query, each on its best retrieved server."""
    allowed = set(result.server_ids)
    best: dict[int, tuple[float, str]] = {}
    for e in (result.pool or ()):
        if e.server_id not in allowed:
            continue
        cur = best.get(e.sub_query)
        if cur is None or (e.score, _neg(e.server_id)) > (cur[0], _neg(cur[1])):
            best[e.sub_query] = (e.score, e.server_id)
    top = result.servers[0][0]
    tasks = tuple(
        SubTask(f"T{j + 1}", sq, best.get(j, (0.0, top))[1])
        for j, sq in enumerate(sqs.sub_queries)
    )
    return Plan("dag", tasks, (), budget)


def _neg(s: str) -> tuple:
    # ties prefer the lexicographically smaller id
    return tuple(-ord(c) for c in s)


def plan_dag(q: str, sqs: SubQuerySet, result: RetrievalResult, gen: TextGenerator,
             registry: Registry | None = None, budget: float = DEFAULT_BUDGET_S) -> Plan:
    """Ask ``gen`` for a DAG; retry once with the validation error, then fall back."""
    if not result.servers:
        raise RoutingError("no servers retrieved; nothing to plan over")
    if registry is not None:
        servers = [registry[s] for s in result.server_ids if s in registry]
    else:
        servers = []
    error: str | None = None
    for attempt in (1, 2):
        prompt = prompts.plan_prompt(q, sqs.sub_queries, servers, error)
        try:
            return parse_plan(gen.generate(prompt, temperature=0.0), result, budget)
        except (PlanValidationError, ProviderError) as exc:
            error = str(exc)
            logger.info("planning attempt %d rejected: %s", attempt, error)
    logger.warning("planner failed twice (%s); using independent per-sub-query tasks", error)
    return fallback_plan(sqs, result, budget)


def make_plan(q: str, sqs: SubQuerySet, result: RetrievalResult, gen: TextGenerator | None,
              registry: Registry | None = None, *, threshold: float = DEFAULT_ROUTE_THRESHOLD,
              budget: float = DEFAULT_BUDGET_S) -> Plan:
    """Route, then build a single-task plan or a DAG."""
    if route(q, sqs, result, threshold) == SIMPLE:
        return single_plan(q, sqs, result, budget)
    if gen is None:
        return fallback_plan(sqs, result, budget)
    return plan_dag(q, sqs, result, gen, registry, budget)


# --------------------------------------------------------------------------- scheduling


def _sorter(plan: Plan) -> graphlib.TopologicalSorter:
    ts: graphlib.TopologicalSorter = graphlib.TopologicalSorter()
    for tid in plan.task_ids:
        ts.add(tid)
    for a, b in plan.edges:
        ts.add(b, a)
    return ts


def schedule(plan: Plan) -> Schedule:
    """Kahn layering: each wave holds every task whose parents are all in earlier waves."""
    ts = _sorter(plan)
    try:
        ts.prepare()
    except graphlib.CycleError as exc:
        raise ScheduleError(f"cycle in plan: {exc.args[1]}") from None
    waves = []
    while ts.is_active():
        ready = sorted(ts.get_ready(), key=task_sort_key)
        waves.append(tuple(ready))
        ts.done(*ready)
    return Schedule(tuple(waves))


def topological_order(plan: Plan) -> list[str]:
    return [t for wave in schedule(plan).waves for t in wave]


def predict_makespan(plan: Plan, latencies: Mapping[str, float],
                     workers: int | None = None) -> Makespan:
    """Sequential sum and parallel makespan.

    With ``workers=None`` the parallel figure is the latency-weighted longest
    path. With a worker limit it is a list-scheduling simulation that starts
    ready tasks in (wave, task id) order.
    """
    missing = [t for t in plan.task_ids if t not in latencies]
    if missing:
        raise MakespanError(f"no latency for task {missing[0]}")
    order = topological_order(plan)
    sequential = float(sum(latencies[t] for t in order))
    if workers is None:
        finish: dict[str, float] = {}
        for t in order:
            start = max((finish[p] for p in plan.parents(t)), default=0.0)
            finish[t] = start + float(latencies[t])
        return Makespan(sequential, max(finish.values(), default=0.0))
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return Makespan(sequential, _list_schedule(plan, latencies, workers, order))


def _list_schedule(plan: Plan, latencies: Mapping[str, float], workers: int,
                   order: list[str]) -> float:
    rank = {t: i for i, t in enumerate(order)}
    pending = {t: len(plan.parents(t)) for t in order}
    children: dict[str, list[str]] = {t: [] for t in order}
    for a, b in plan.edges:
        children[a].append(b)
    ready = [(rank[t], t) for t in order if pending[t] == 0]
    heapq.heapify(ready)
    running: list[tuple[float, int, str]] = []
    now = 0.0
    while ready or running:
        while ready and len(running) < workers:
            _, t = heapq.heappop(ready)
            heapq.heappush(running, (now + float(latencies[t]), rank[t], t))
        now, _, done = heapq.heappop(running)
        for c in children[done]:
            pending[c] -= 1
            if pending[c] == 0:
                heapq.heappush(ready, (rank[c], c))
    return now


def plan_from_spec(tasks: Mapping[str, tuple[str, str]], edges: Iterable[str] = (),
                   budget: float = DEFAULT_BUDGET_S) -> Plan:
    """Convenience constructor: ``{"T1": (query, server)}`` and ``["T1->T2"]``."""
    data = {"tasks": {k: {"query": q, "server": s} for k, (q, s) in tasks.items()},
            "dependency": list(edges)}
    t, e = _tasks_and_edges(data)
    plan = Plan("single" if len(t) == 1 and not e else "dag", t, e, budget)
    validate_plan(plan)
    return plan
