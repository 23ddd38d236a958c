"""Teacher-trajectory synthesis and two-stage curation into an SFT dataset.

Curation runs the correctness judge first and the efficiency judge on what
survives; that order matters (an efficiency fix must never launder a schema
violation). Both judges are deterministic rule engines. An LLM can be layered
on the correctness judge for logical soundness, but the rules alone decide
offline.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import re
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ProviderError
from .executor import WITH_THOUGHT, Limits, Step, Trajectory, run_task
from .planner import SubTask
from .providers import TextGenerator
from .registry import Registry, ServerDescriptor, check_params
from .sim.fleet import ToolClient

CORRECTNESS = "correctness"
EFFICIENCY = "efficiency"
PASS, FAIL, CORRECTED = "pass", "fail", "corrected"

DATASET_FORMAT = "tura-distill"
DATASET_VERSION = 1

_REF = re.compile(r"\{\{[^{}]*\}\}")


@dataclass(frozen=True)
class Finding:
    step: int
    code: str
    detail: str

    def to_dict(self) -> dict[str, Any]:
        return {"step": self.step, "code": self.code, "detail": self.detail}


@dataclass
class JudgeVerdict:
    task_id: str
    stage: str
    decision: str
    findings: list[Finding] = field(default_factory=list)
    replacement: Trajectory | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "stage": self.stage,
            "decision": self.decision,
            "findings": [f.to_dict() for f in self.findings],
        }


# --------------------------------------------------------------------------- synthesis


async def synthesize_expert(tasks: Sequence[SubTask], teacher: TextGenerator, client: ToolClient,
                            *, variant: str = CORRECTNESS, temperature: float | None = None,
                            limits: Limits | None = None) -> list[Trajectory]:
    """One with-thought trajectory per task, in input order. Failures are kept."""
    runs = [run_task(st, {}, WITH_THOUGHT, teacher, client, limits, variant=variant,
                     temperature=temperature) for st in tasks]
    return list(await asyncio.gather(*runs))


def expert_set(trajectories: Iterable[Trajectory]) -> list[Trajectory]:
    return [t for t in trajectories if t.succeeded]


# --------------------------------------------------------------------------- judges


def _strings(value: Any) -> Iterable[str]:
    if isinstance(value, str):
        yield value
    elif isinstance(value, dict):
        for v in value.values():
            yield from _strings(v)
    elif isinstance(value, list):
        for v in value:
            yield from _strings(v)


def judge_correctness(traj: Trajectory, registry: Registry,
                      llm: TextGenerator | None = None) -> JudgeVerdict:
    """Schema, parameter and structure checks on every step."""
    findings: list[Finding] = []
    if traj.server_id not in registry:
        return JudgeVerdict(traj.task_id, CORRECTNESS, FAIL,
                            [Finding(0, "unknown_server", f"no server {traj.server_id!r}")])
    desc: ServerDescriptor = registry[traj.server_id]
    if not traj.succeeded:
        findings.append(Finding(0, "unsuccessful", f"outcome is {traj.outcome}"))
    terminals = [i for i, s in enumerate(traj.steps) if s.terminal]
    if not terminals:
        findings.append(Finding(len(traj.steps), "missing_terminal", "no final answer step"))
    elif terminals != [len(traj.steps) - 1]:
        findings.append(Finding(terminals[0] + 1, "misplaced_terminal",
                                "final answer must be the single last step"))
    for i, s in enumerate(traj.steps, start=1):
        if s.terminal:
            if not (s.final or "").strip():
                findings.append(Finding(i, "empty_final", "terminal step has no answer text"))
            continue
        assert s.action is not None
        tool = desc.tool(s.action.tool)
        if tool is None:
            findings.append(Finding(i, "tool_confinement",
                                    f"{s.action.tool!r} is not a tool of {traj.server_id}"))
            continue
        for issue in check_params(tool, s.action.params):
            findings.append(Finding(i, issue.code, issue.detail))
        for text in _strings(s.action.params):
            for ref in _REF.findall(text):
                findings.append(Finding(i, "undefined_reference",
                                        f"parameter refers to unavailable value {ref}"))
    if not findings and llm is not None:
        findings += _llm_soundness(traj, llm)
    return JudgeVerdict(traj.task_id, CORRECTNESS, FAIL if findings else PASS, findings)


def _llm_soundness(traj: Trajectory, llm: TextGenerator) -> list[Finding]:
    prompt = (
        "### Trajectory review\nReply PASS if every thought logically justifies its action, "
        "otherwise FAIL: <step number> <reason>.\n\n"
        + json.dumps(traj.to_dict(), ensure_ascii=False)
    )
    try:
        reply = llm.generate(prompt, temperature=0.0).strip()
    except ProviderError:
        return []
    if reply.upper().startswith("FAIL"):
        m = re.search(r"\d+", reply)
        return [Finding(int(m.group()) if m else 0, "logic_unsound", reply[:200])]
    return []


def cohort_threshold(lengths: Sequence[int], percentile: float = 95.0,
                     min_cohort: int = 5) -> float | None:
    """Step-count ceiling for a cohort, or ``None`` if it is too small to judge."""
    if len(lengths) < min_cohort:
        return None
    return float(np.percentile(np.asarray(lengths, dtype=float), percentile))


def _remove_redundancy(traj: Trajectory) -> tuple[list[Step], list[Finding]]:
    findings: list[Finding] = []
    kept: list[Step] = []
    last_action = None
    answered_at: int | None = None
    final = (traj.final or (traj.steps[-1].final if traj.steps else None) or "").strip()
    for i, s in enumerate(traj.steps, start=1):
        if s.terminal:
            kept.append(s)
            continue
        if answered_at is not None:
            findings.append(Finding(i, "post_answer_step",
                                    f"step {answered_at} already produced the final answer"))
            continue
        if last_action is not None and s.action == last_action:
            findings.append(Finding(i, "duplicate_action",
                                    f"repeats {s.action.tool} with identical parameters"))
            continue
        kept.append(s)
        last_action = s.action
        if final and s.observation.strip() == final:
            answered_at = i
    return kept, findings


def judge_efficiency(traj: Trajectory, cohort: Sequence[int] | None = None, *,
                     registry: Registry | None = None, percentile: float = 95.0,
                     min_cohort: int = 5) -> JudgeVerdict:
    """Delete redundant steps (corrected) or prune overly long paths (fail).

    ``cohort`` holds the step counts of comparable trajectories (same server);
    a trajectory longer than its ``percentile`` is sub-optimal. A corrected
    trajectory is re-checked by :func:`judge_correctness` when ``registry``
    is given.
    """
    kept, findings = _remove_redundancy(traj)
    fixed = replace(traj, steps=kept, rejected=list(traj.rejected)) if findings else traj
    limit = cohort_threshold(cohort, percentile, min_cohort) if cohort is not None else None
    if limit is not None and len(fixed.steps) > limit:
        findings.append(Finding(len(fixed.steps), "sub_optimality",
                                f"{len(fixed.steps)} steps exceeds the cohort p{percentile:g} "
                                f"of {limit:.2f}"))
        return JudgeVerdict(traj.task_id, EFFICIENCY, FAIL, findings)
    if not findings:
        return JudgeVerdict(traj.task_id, EFFICIENCY, PASS)
    if registry is not None:
        recheck = judge_correctness(fixed, registry)
        if recheck.decision != PASS:
            return JudgeVerdict(traj.task_id, EFFICIENCY, FAIL, findings + recheck.findings)
    return JudgeVerdict(traj.task_id, EFFICIENCY, CORRECTED, findings, fixed)


# --------------------------------------------------------------------------- records


def descriptor_digest(desc: ServerDescriptor) -> str:
    body = json.dumps({"server_id": desc.server_id, "description": desc.description,
                       "tools": [t.to_dict() for t in desc.tools]}, sort_keys=True)
    return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class DistillRecord:
    context: dict[str, Any]
    target: tuple[dict[str, Any], ...]
    final: str

    def to_dict(self) -> dict[str, Any]:
        return {"context": self.context, "target": list(self.target), "final": self.final}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DistillRecord":
        return cls(data["context"], tuple(data["target"]), data["final"])

    @classmethod
    def from_trajectory(cls, traj: Trajectory, desc: ServerDescriptor) -> "DistillRecord":
        target = []
        for s in traj.steps:
            if s.terminal:
                continue
            assert s.action is not None
            target.append({"thought": s.thought or "", "action": s.action.to_dict(),
                           "observation": s.observation})
        final_step = traj.steps[-1]
        final = (final_step.final or traj.final or "").strip()
        context = {
            "task_id": traj.task_id,
            "refined_query": traj.refined_query,
            "server_id": traj.server_id,
            "server_digest": descriptor_digest(desc),
            "tools": [t.to_dict() for t in desc.tools],
            "final_thought": final_step.thought or "",
        }
        return cls(context, tuple(target), final)

    def to_trajectory(self) -> Trajectory:
        from .executor import Action, SUCCESS

        steps = [Step(t.get("observation", ""), t.get("thought", ""),
                      Action(t["action"]["tool"], dict(t["action"].get("params") or {})))
                 for t in self.target]
        steps.append(Step("", self.context.get("final_thought", ""), None, self.final))
        return Trajectory(self.context["task_id"], self.context["refined_query"],
                          self.context["server_id"], steps, SUCCESS, self.final)

    def training_text(self) -> str:
        """Serialized target: each thought followed by its action, then the answer."""
        parts = [json.dumps({"thought": t["thought"], "action": t["action"]}, ensure_ascii=False)
                 for t in self.target]
        parts.append(json.dumps({"final": self.final}, ensure_ascii=False))
        return "\n".join(parts)


@dataclass
class CurateConfig:
    percentile: float = 95.0
    min_cohort: int = 5


@dataclass
class CurationResult:
    records: list[DistillRecord]
    verdicts: list[JudgeVerdict]

    @property
    def corrected(self) -> int:
        return sum(v.decision == CORRECTED for v in self.verdicts)


def correctness_stage(expert: Sequence[Trajectory], registry: Registry,
                      llm: TextGenerator | None = None) -> tuple[list[Trajectory], list[JudgeVerdict]]:
    verdicts = [judge_correctness(t, registry, llm) for t in expert]
    return [t for t, v in zip(expert, verdicts) if v.decision == PASS], verdicts


def efficiency_stage(trajs: Sequence[Trajectory], registry: Registry | None,
                     config: CurateConfig) -> tuple[list[Trajectory], list[JudgeVerdict]]:
    # cohorts are measured after redundancy removal
    cleaned = [_remove_redundancy(t)[0] for t in trajs]
    cohorts: dict[str, list[int]] = defaultdict(list)
    for t, steps in zip(trajs, cleaned):
        cohorts[t.server_id].append(len(steps))
    kept: list[Trajectory] = []
    verdicts: list[JudgeVerdict] = []
    for t in trajs:
        v = judge_efficiency(t, cohorts[t.server_id], registry=registry,
                             percentile=config.percentile, min_cohort=config.min_cohort)
        verdicts.append(v)
        if v.decision == PASS:
            kept.append(t)
        elif v.decision == CORRECTED:
            assert v.replacement is not None
            kept.append(v.replacement)
    return kept, verdicts


def curate_report(expert: Sequence[Trajectory], registry: Registry,
                  config: CurateConfig | None = None,
                  llm: TextGenerator | None = None) -> CurationResult:
    config = config or CurateConfig()
    correct, v1 = correctness_stage(expert, registry, llm)
    efficient, v2 = efficiency_stage(correct, registry, config)
    records = [DistillRecord.from_trajectory(t, registry[t.server_id]) for t in efficient]
    return CurationResult(records, v1 + v2)


def curate(expert: Sequence[Trajectory], registry: Registry,
           config: CurateConfig | None = None) -> list[DistillRecord]:
    """Correctness filter, then efficiency filter/correction, then serialize."""
    return curate_report(expert, registry, config).records


# --------------------------------------------------------------------------- files


def write_dataset(records: Sequence[DistillRecord], path: str | Path) -> None:
    header = {"format": DATASET_FORMAT, "version": DATASET_VERSION, "records": len(records)}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_dataset(path: str | Path) -> list[DistillRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: missing dataset header")
    header = json.loads(lines[0])
    if header.get("format") != DATASET_FORMAT:
        raise ValueError(f"{path}: not a {DATASET_FORMAT} file")
    records = [DistillRecord.from_dict(json.loads(line)) for line in lines[1:] if line.strip()]
    if len(records) != header.get("records"):
        raise ValueError(f"{path}: header says {header.get('records')} records, found {len(records)}")
    return records


def write_trajectories(trajs: Iterable[Trajectory], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trajs:
            fh.write(json.dumps(t.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_trajectories(path: str | Path) -> list[Trajectory]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(Trajectory.from_dict(json.loads(line)))
    return out


def write_verdicts(verdicts: Iterable[JudgeVerdict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(json.dumps(v.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
