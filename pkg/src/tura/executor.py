"""Plan execution: per-task ReAct agents confined to one server, run under a latency budget.

Tasks start as soon as all of their parents have finished (task-level
readiness), optionally throttled by a worker limit. Parent outputs reach a
child through ``{{Tk.output}}`` placeholders in its instruction.
"""

from __future__ import annotations

import asyncio
import json
import logging
import re
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from . import prompts
from .decomposer import SubQuerySet, decompose
from .errors import FormatError, ProviderError
from .planner import (
    DEFAULT_BUDGET_S,
    DEFAULT_ROUTE_THRESHOLD,
    Plan,
    Schedule,
    SubTask,
    make_plan,
    schedule as make_schedule,
    task_sort_key,
    topological_order,
)
from .providers import TextGenerator, agenerate
from .registry import Registry, ToolSchema, check_params, parse_tool
from .retriever import RetrievalConfig, RetrievalDeps, RetrievalResult, retrieve_servers
from .sim import protocol as P
from .sim.fleet import ToolClient

logger = logging.getLogger(__name__)

WITH_THOUGHT = "with_thought"
ACTION_ONLY = "action_only"
MODES = (WITH_THOUGHT, ACTION_ONLY)

SUCCESS = "success"
BUDGET_EXCEEDED = "budget_exceeded"
TOOL_ERROR = "tool_error"
STEP_LIMIT = "step_limit"

_PLACEHOLDER = re.compile(r"\{\{\s*([A-Za-z0-9_]+)\.output\s*\}\}")


@dataclass(frozen=True)
class Action:
    tool: str
    params: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"tool": self.tool, "params": self.params}


@dataclass(frozen=True)
class Step:
    """One ReAct step. ``action`` is ``None`` exactly when the step is terminal."""

    observation: str
    thought: str | None = None
    action: Action | None = None
    final: str | None = None
    at: float | None = None  # monotonic completion time

    @property
    def terminal(self) -> bool:
        return self.action is None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"observation": self.observation}
        if self.thought is not None:
            d["thought"] = self.thought
        if self.action is not None:
            d["action"] = self.action.to_dict()
        else:
            d["final"] = self.final
        return d


@dataclass
class Trajectory:
    task_id: str
    refined_query: str
    server_id: str
    steps: list[Step] = field(default_factory=list)
    outcome: str = STEP_LIMIT
    final: str | None = None
    detail: str | None = None
    rejected: list[dict[str, Any]] = field(default_factory=list)
    started: float | None = None
    finished: float | None = None

    @property
    def succeeded(self) -> bool:
        return self.outcome == SUCCESS

    @property
    def actions(self) -> list[Action]:
        return [s.action for s in self.steps if s.action is not None]

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "task_id": self.task_id,
            "refined_query": self.refined_query,
            "server_id": self.server_id,
            "steps": [s.to_dict() for s in self.steps],
            "outcome": self.outcome,
        }
        if self.final is not None:
            d["final"] = self.final
        if self.detail is not None:
            d["detail"] = self.detail
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Trajectory":
        steps = []
        for s in data.get("steps", []):
            act = s.get("action")
            steps.append(Step(
                observation=s.get("observation", ""),
                thought=s.get("thought"),
                action=Action(act["tool"], dict(act.get("params") or {})) if act else None,
                final=s.get("final"),
            ))
        return cls(data["task_id"], data["refined_query"], data["server_id"], steps,
                   data.get("outcome", SUCCESS), data.get("final"), data.get("detail"))


@dataclass
class Limits:
    max_steps: int = 6
    per_task_timeout: float = 10.0


@dataclass
class ExecutionReport:
    query: str
    plan: Plan
    schedule: Schedule
    trajectories: dict[str, Trajectory]
    final_answer: str | None
    wall_makespan: float
    latencies: dict[str, float]
    starts: dict[str, float]
    finishes: dict[str, float]
    sub_queries: SubQuerySet | None = None
    retrieval: RetrievalResult | None = None
    origin: float | None = field(default=None, repr=False)

    @property
    def success_count(self) -> int:
        return sum(t.succeeded for t in self.trajectories.values())

    @property
    def success_rate(self) -> float:
        return self.success_count / len(self.trajectories) if self.trajectories else 0.0

    def to_dict(self, timing: bool = True) -> dict[str, Any]:
        d: dict[str, Any] = {"query": self.query}
        if self.sub_queries is not None:
            d["sub_queries"] = list(self.sub_queries.sub_queries)
        if self.retrieval is not None:
            d["retrieval"] = [{"server_id": s, "score": round(v, 12)}
                              for s, v in self.retrieval.servers]
        d["plan"] = self.plan.to_dict()
        d["schedule"] = [list(w) for w in self.schedule.waves]
        d["trajectories"] = [self.trajectories[t].to_dict()
                             for t in sorted(self.trajectories, key=task_sort_key)]
        d["final_answer"] = self.final_answer
        if timing:
            d["timing"] = {
                "wall_makespan_ms": self.wall_makespan * 1000,
                "tasks": {t: {"start_ms": self.starts.get(t, 0.0) * 1000,
                              "finish_ms": self.finishes.get(t, 0.0) * 1000,
                              "latency_ms": self.latencies.get(t, 0.0) * 1000}
                          for t in sorted(self.trajectories, key=task_sort_key)},
            }
        return d

    def trace_records(self) -> list[dict[str, Any]]:
        """One record per step, in task order, with timestamps relative to plan start."""
        t0 = self.origin
        out = []
        for tid in sorted(self.trajectories, key=task_sort_key):
            tr = self.trajectories[tid]
            for i, s in enumerate(tr.steps):
                rec = {"task_id": tid, "server_id": tr.server_id, "step": i + 1, **s.to_dict()}
                if s.at is not None and t0 is not None:
                    rec["timestamp_ms"] = (s.at - t0) * 1000
                out.append(rec)
        return out


# --------------------------------------------------------------------------- single task


def splice_parent_outputs(query: str, parent_outputs: Mapping[str, str]) -> str:
    def sub(m: re.Match) -> str:
        tid = m.group(1)
        if tid in parent_outputs:
            return parent_outputs[tid]
        logger.warning("no output available for placeholder %s; leaving it verbatim", m.group(0))
        return m.group(0)

    return _PLACEHOLDER.sub(sub, query)


@dataclass
class _Parsed:
    thought: str | None
    action: Action | None
    final: str | None


def parse_agent_output(text: str) -> _Parsed:
    """Accept ``{"thought", "action": {"tool", "params"}}``, ``{"final": ...}``,
    or the flat ``{"step", "tool", "params"}`` shape."""
    try:
        obj = prompts.extract_json_object(text)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if not isinstance(obj, dict):
        raise FormatError("agent output must be a JSON object")
    thought = obj.get("thought")
    if thought is not None and not isinstance(thought, str):
        thought = json.dumps(thought, ensure_ascii=False)
    final = obj.get("final", obj.get("answer"))
    if final is not None:
        if not isinstance(final, str) or not final.strip():
            raise FormatError("final answer must be non-empty text")
        return _Parsed(thought, None, final.strip())
    act = obj.get("action")
    if act is None and "tool" in obj:
        act = {"tool": obj["tool"], "params": obj.get("params", {})}
    if not isinstance(act, dict) or not isinstance(act.get("tool"), str):
        raise FormatError("expected an action with a tool name, or a final answer")
    params = act.get("params", {})
    if params is None:
        params = {}
    if not isinstance(params, dict):
        raise FormatError("action params must be an object")
    return _Parsed(thought, Action(act["tool"], params), None)


async def _list_tools(client: ToolClient, server_id: str, request_id: str) -> list[ToolSchema] | str:
    req = P.request(P.LIST, server_id, request_id)
    resp = await client.call(req)
    if not resp.get("ok"):
        resp = await client.call({**req, "request_id": request_id + "-retry"})
    if not resp.get("ok"):
        err = resp.get("error") or {}
        return f"{err.get('code', 'error')}: {err.get('message', '')}"
    return [parse_tool(t, server_id, i, None) for i, t in enumerate(resp["result"])]


def _rid(client: Any, fallback: str) -> str:
    nxt = getattr(client, "next_id", None)
    return nxt() if callable(nxt) else fallback


async def _drive(traj: Trajectory, query: str, gen: TextGenerator, client: ToolClient,
                 mode: str, limits: Limits, variant: str, temperature: float | None) -> None:
    loop = asyncio.get_running_loop()
    tools = await _list_tools(client, traj.server_id, _rid(client, f"{traj.task_id}-list"))
    if isinstance(tools, str):
        traj.outcome, traj.detail = TOOL_ERROR, tools
        return
    by_name = {t.name: t for t in tools}
    history: list[dict[str, Any]] = []
    for attempt in range(1, limits.max_steps + 1):
        prompt = prompts.execute_prompt(query, traj.server_id, tools, history, attempt,
                                        mode=mode, variant=variant)
        try:
            parsed = parse_agent_output(await agenerate(gen, prompt, temperature=temperature))
        except (FormatError, ProviderError) as exc:
            note = {"attempt": attempt, "error": f"unusable response: {exc}"}
            traj.rejected.append(note)
            history.append(note)
            continue
        thought = None if mode == ACTION_ONLY else (parsed.thought or "")
        if parsed.final is not None:
            traj.steps.append(Step("", thought, None, parsed.final, loop.time()))
            traj.outcome, traj.final = SUCCESS, parsed.final
            return
        action = parsed.action
        assert action is not None
        tool = by_name.get(action.tool)
        if tool is None:
            note = {"attempt": attempt, "action": action.to_dict(),
                    "error": f"tool_confinement: {action.tool!r} is not a tool of "
                             f"{traj.server_id}; choose one of {sorted(by_name)}"}
            traj.rejected.append(note)
            history.append(note)
            continue
        issues = check_params(tool, action.params)
        if issues:
            note = {"attempt": attempt, "action": action.to_dict(),
                    "error": "invalid_params: " + "; ".join(i.detail for i in issues)}
            traj.rejected.append(note)
            history.append(note)
            continue
        req = P.request(P.CALL, traj.server_id, _rid(client, f"{traj.task_id}-{attempt}"),
                        action.tool, action.params)
        resp = await client.call(req)
        if not resp.get("ok"):
            first = resp.get("error") or {}
            history.append({"attempt": attempt, "action": action.to_dict(),
                            "observation": f"error {first.get('code')}: {first.get('message')}; retrying"})
            req = {**req, "request_id": _rid(client, f"{traj.task_id}-{attempt}-retry")}
            resp = await client.call(req)
        if not resp.get("ok"):
            err = resp.get("error") or {}
            obs = f"error {err.get('code')}: {err.get('message')}"
            traj.steps.append(Step(obs, thought, action, None, loop.time()))
            traj.outcome, traj.detail = TOOL_ERROR, obs
            return
        obs = resp.get("result")
        obs = obs if isinstance(obs, str) else json.dumps(obs, ensure_ascii=False)
        traj.steps.append(Step(obs, thought, action, None, loop.time()))
        entry = {"action": action.to_dict(), "observation": obs}
        if thought is not None:
            entry["thought"] = thought
        history.append(entry)
    traj.outcome = STEP_LIMIT
    traj.detail = f"no final answer within {limits.max_steps} steps"


async def run_task(st: SubTask, parent_outputs: Mapping[str, str], mode: str,
                   gen: TextGenerator, client: ToolClient, limits: Limits | None = None, *,
                   variant: str = "correctness", temperature: float | None = None,
                   _traj: Trajectory | None = None) -> Trajectory:
    """Run one sub-task to a terminal outcome; failures are reported, never raised."""
    if mode not in MODES:
        raise ValueError(f"unknown execution mode {mode!r}")
    limits = limits or Limits()
    query = splice_parent_outputs(st.refined_query, parent_outputs)
    traj = _traj or Trajectory(st.task_id, query, st.server_id)
    traj.refined_query = query
    loop = asyncio.get_running_loop()
    traj.started = loop.time()
    try:
        await asyncio.wait_for(_drive(traj, query, gen, client, mode, limits, variant, temperature),
                               limits.per_task_timeout)
    except asyncio.TimeoutError:
        traj.outcome = BUDGET_EXCEEDED
        traj.detail = f"task exceeded {limits.per_task_timeout}s"
    finally:
        traj.finished = loop.time()
    return traj


# --------------------------------------------------------------------------- plans


@dataclass
class ExecDeps:
    gen: TextGenerator
    client: ToolClient
    synth: TextGenerator | None = None


def synthesize_answer(query: str, plan: Plan, trajectories: Mapping[str, Trajectory],
                      synth: TextGenerator | None = None) -> str | None:
    tm = plan.task_map
    outputs = [(tid, tm[tid].server_id, trajectories[tid].final or "")
               for tid in plan.task_ids if tid in trajectories and trajectories[tid].succeeded]
    if not outputs:
        return None
    if synth is not None:
        try:
            text = synth.generate(prompts.synthesis_prompt(query, outputs), temperature=0.0).strip()
            if text:
                return text
        except ProviderError as exc:
            logger.warning("answer synthesis failed (%s); concatenating task outputs", exc)
    return "\n".join(f"[{tid}] {sid}: {text}" for tid, sid, text in outputs)


async def execute_plan(plan: Plan, sched: Schedule | None, deps: ExecDeps,
                       mode: str = ACTION_ONLY, budget: float | None = None, *,
                       workers: int | None = None, limits: Limits | None = None,
                       query: str | None = None) -> ExecutionReport:
    """Dispatch every task once its parents finish; cancel whatever is left at the budget."""
    sched = sched or make_schedule(plan)
    budget = plan.latency_budget if budget is None else budget
    limits = limits or Limits()
    loop = asyncio.get_running_loop()
    t0 = loop.time()
    tm = plan.task_map
    trajs = {tid: Trajectory(tid, tm[tid].refined_query, tm[tid].server_id) for tid in plan.task_ids}
    events = {tid: asyncio.Event() for tid in plan.task_ids}
    sem = asyncio.Semaphore(workers) if workers else None

    async def runner(tid: str) -> None:
        for p in plan.parents(tid):
            await events[p].wait()
        parents = {p: trajs[p].final for p in plan.parents(tid) if trajs[p].succeeded}
        if sem is not None:
            async with sem:
                await run_task(tm[tid], parents, mode, deps.gen, deps.client, limits, _traj=trajs[tid])
        else:
            await run_task(tm[tid], parents, mode, deps.gen, deps.client, limits, _traj=trajs[tid])
        events[tid].set()

    if plan.kind == "single":
        order = plan.task_ids
    else:
        order = topological_order(plan)
    jobs = [asyncio.ensure_future(runner(tid)) for tid in order]
    done, pending = await asyncio.wait(jobs, timeout=max(budget, 0.0))
    for job in pending:
        job.cancel()
    if pending:
        await asyncio.gather(*pending, return_exceptions=True)
    for job in done:
        exc = job.exception()
        if exc is not None:
            raise exc
    end = loop.time()
    for tid, tr in trajs.items():
        if tr.finished is None or not events[tid].is_set():
            tr.outcome = BUDGET_EXCEEDED
            tr.detail = f"cancelled at the {budget}s plan budget"
            if tr.started is not None:
                tr.finished = end
    starts = {t: (tr.started - t0) for t, tr in trajs.items() if tr.started is not None}
    finishes = {t: (tr.finished - t0) for t, tr in trajs.items() if tr.finished is not None}
    latencies = {t: finishes[t] - starts[t] for t in starts if t in finishes}
    wall = max(finishes.values(), default=end - t0)
    report = ExecutionReport(
        query=query or "",
        plan=plan,
        schedule=sched,
        trajectories=trajs,
        final_answer=synthesize_answer(query or "", plan, trajs, deps.synth),
        wall_makespan=wall,
        latencies=latencies,
        starts=starts,
        finishes=finishes,
        origin=t0,
    )
    return report


# --------------------------------------------------------------------------- end to end


@dataclass
class AnswerConfig:
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    route_threshold: float = DEFAULT_ROUTE_THRESHOLD
    budget: float = DEFAULT_BUDGET_S
    mode: str = ACTION_ONLY
    workers: int | None = None
    limits: Limits = field(default_factory=Limits)


@dataclass
class Pipeline:
    """Everything :func:`answer` needs; providers may be shared between roles."""

    registry: Registry
    retrieval: RetrievalDeps
    planner: TextGenerator | None
    agent: TextGenerator
    client: ToolClient
    synth: TextGenerator | None = None


def plan_query(q: str, pipeline: Pipeline,
               config: AnswerConfig | None = None) -> tuple[SubQuerySet, RetrievalResult, Plan]:
    """Stages one and two: decompose, retrieve, route, plan."""
    config = config or AnswerConfig()
    rdeps = pipeline.retrieval
    if config.retrieval.decompose and rdeps.decomposer is not None:
        sqs = decompose(q, rdeps.decomposer)
    else:
        sqs = SubQuerySet(q.strip(), (q.strip(),))
    result = retrieve_servers(q, rdeps, config.retrieval, sqs=sqs)
    plan = make_plan(q, sqs, result, pipeline.planner, pipeline.registry,
                     threshold=config.route_threshold, budget=config.budget)
    return sqs, result, plan


async def answer(q: str, pipeline: Pipeline, config: AnswerConfig | None = None) -> ExecutionReport:
    """Decompose, retrieve, route, plan, schedule, execute."""
    config = config or AnswerConfig()
    sqs, result, plan = plan_query(q, pipeline, config)
    report = await execute_plan(plan, make_schedule(plan),
                                ExecDeps(pipeline.agent, pipeline.client, pipeline.synth),
                                config.mode, config.budget, workers=config.workers,
                                limits=config.limits, query=q)
    report.sub_queries = sqs
    report.retrieval = result
    return report
