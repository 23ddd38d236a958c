"""Prompt templates and helpers for pulling JSON out of model output."""

from __future__ import annotations

import json
import re
from collections.abc import Iterable, Sequence
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .registry import ServerDescriptor, ToolSchema

_FENCE = re.compile(r"```(?:[A-Za-z0-9_-]+)?\s*\n?(.*?)```", re.DOTALL)

TOOL_PROFILE_HEADER = "### Tool profile generation"
DECOMPOSE_HEADER = "### Query decomposition"
PLAN_HEADER = "### Task planning"
EXECUTE_HEADER = "### Tool execution"
SYNTHESIS_HEADER = "### Answer synthesis"


def strip_code_fences(text: str) -> str:
    m = _FENCE.search(text)
    return m.group(1).strip() if m else text.strip()


def extract_json_object(text: str) -> Any:
    """Return the first balanced ``{...}`` object in ``text`` parsed as JSON.

    Surrounding prose and code fences are ignored. Raises ``ValueError``.
    """
    body = strip_code_fences(text)
    start = body.find("{")
    while start >= 0:
        depth = 0
        in_str = esc = False
        for i in range(start, len(body)):
            c = body[i]
            if in_str:
                if esc:
                    esc = False
                elif c == "\\":
                    esc = True
                elif c == '"':
                    in_str = False
            elif c == '"':
                in_str = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    try:
                        return json.loads(body[start:i + 1])
                    except json.JSONDecodeError:
                        break
        start = body.find("{", start + 1)
    raise ValueError("no JSON object found")


def describe_tool(tool: "ToolSchema") -> str:
    return json.dumps(tool.to_dict(), ensure_ascii=False)


def tool_profile_prompt(desc: "ServerDescriptor", n_q: int) -> str:
    tools = "\n".join(f"- {t.name}: {t.description}" for t in desc.tools)
    return (
        f"{TOOL_PROFILE_HEADER}\n"
        "As a tech expert, analyze the tool document below and write diverse, practical "
        "example queries a real user might type to use its core functions. Vary the wording "
        "and intent; include queries that mention concrete parameters.\n"
        f"Write {n_q} queries.\n\n"
        f"Server: {desc.server_id}\n"
        f"Document: {desc.description}\n"
        f"Tools:\n{tools}\n\n"
        "Respond with a JSON array of strings only, e.g.\n"
        '["Example query demonstrating feature A", "Another query for a different use case"]'
    )


def decompose_prompt(query: str) -> str:
    return (
        f"{DECOMPOSE_HEADER}\n"
        "Split the user query into independent, atomic sub-tasks. Cover every intent in the "
        "query and keep the sub-tasks independent of each other.\n\n"
        f"User Query: {query}\n\n"
        'Respond with a JSON object: {"tasks": ["sub-task 1", "sub-task 2"]}'
    )


def plan_prompt(query: str, sub_queries: Sequence[str],
                servers: Iterable["ServerDescriptor"], error: str | None = None) -> str:
    server_lines = "\n".join(
        f"- {d.server_id}: {d.description} (tools: {', '.join(d.tool_names)})" for d in servers
    )
    subq = "\n".join(f"- {s}" for s in sub_queries)
    text = (
        f"{PLAN_HEADER}\n"
        "You are a solution architect. Turn the user query into a directed acyclic graph of "
        "executable sub-tasks. Give each task an id T1..Tn, a self-contained instruction, and "
        "exactly one server from the list below. Add a dependency \"Ta->Tb\" only when Tb needs "
        "the output of Ta; reference that output inside Tb's instruction as {{Ta.output}}. "
        "Tasks without dependencies run in parallel.\n\n"
        f"User Query: {query}\n"
        f"Sub-queries:\n{subq}\n"
        f"Available servers:\n{server_lines}\n\n"
        "Respond with a JSON object:\n"
        '{"tasks": {"T1": {"query": "task description 1", "server": "<server_id>"}, '
        '"T2": {"query": "uses {{T1.output}}", "server": "<server_id>"}}, '
        '"dependency": ["T1->T2"]}'
    )
    if error:
        text += f"\n\nYour previous plan was rejected: {error}\nReturn a corrected plan."
    return text


EXECUTE_CORRECTNESS = (
    "Given a query and a set of available tools, reason step by step. Select the best tool, "
    "extract its parameters exactly as the schema requires, and check each result before "
    "moving on."
)
EXECUTE_EFFICIENCY = (
    "Given a query and a set of available tools, produce the shortest tool-calling trace. "
    "Avoid repeated calls, prefer a single step, and stop as soon as the answer is known."
)
EXECUTE_ACTION_ONLY = (
    "Given a query and a set of available tools, emit the next action directly. Do not write "
    "any reasoning."
)


def execute_prompt(query: str, server_id: str, tools: Sequence["ToolSchema"],
                   history: Sequence[dict], step: int, *, mode: str = "with_thought",
                   variant: str = "correctness") -> str:
    if mode == "action_only":
        instruction = EXECUTE_ACTION_ONLY
        shape = ('{"action": {"tool": "<tool_name>", "params": {...}}}  or, when done,  '
                 '{"final": "<answer>"}')
    else:
        instruction = EXECUTE_EFFICIENCY if variant == "efficiency" else EXECUTE_CORRECTNESS
        shape = ('{"thought": "...", "action": {"tool": "<tool_name>", "params": {...}}}  '
                 'or, when done,  {"thought": "...", "final": "<answer>"}')
    tool_lines = "\n".join(describe_tool(t) for t in tools)
    lines = [
        EXECUTE_HEADER,
        instruction,
        "",
        f"User Query: {query}",
        f"Server: {server_id}",
        f"Available Tools:\n{tool_lines}",
    ]
    if history:
        lines.append("History:")
        for h in history:
            lines.append(json.dumps(h, ensure_ascii=False, sort_keys=True))
    lines += ["", f"Current step: {step}", f"Respond with one JSON object: {shape}"]
    return "\n".join(lines)


def synthesis_prompt(query: str, outputs: Sequence[tuple[str, str, str]]) -> str:
    body = "\n".join(f"[{tid}] ({sid}) {text}" for tid, sid, text in outputs)
    return (
        f"{SYNTHESIS_HEADER}\n"
        "Write one answer to the user query using only the tool results below.\n\n"
        f"User Query: {query}\n"
        f"Results:\n{body}\n"
    )
