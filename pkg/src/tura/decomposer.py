"""Split a raw query into atomic sub-queries with an LLM, falling back to pass-through."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from . import prompts
from .errors import FormatError, ProviderError
from .providers import TextGenerator

logger = logging.getLogger(__name__)

MAX_SUB_QUERIES = 8


@dataclass(frozen=True)
class SubQuerySet:
    original_query: str
    sub_queries: tuple[str, ...]

    def __post_init__(self):
        if not self.sub_queries:
            raise ValueError("a SubQuerySet needs at least one sub-query")

    def __len__(self) -> int:
        return len(self.sub_queries)

    def to_dict(self) -> dict:
        return {"query": self.original_query, "tasks": list(self.sub_queries)}


def parse_tasks(text: str, limit: int = MAX_SUB_QUERIES) -> tuple[str, ...]:
    try:
        obj = prompts.extract_json_object(text)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    tasks = obj.get("tasks") if isinstance(obj, dict) else None
    if not isinstance(tasks, list):
        raise FormatError('expected an object with a "tasks" list')
    out: list[str] = []
    for t in tasks:
        if not isinstance(t, str):
            raise FormatError("sub-queries must be strings")
        t = t.strip()
        if t and t not in out:
            out.append(t)
    if not out:
        raise FormatError("no sub-queries in output")
    return tuple(out[:limit])


def decompose(q: str, gen: TextGenerator, *, max_sub_queries: int = MAX_SUB_QUERIES) -> SubQuerySet:
    """Never raises on provider trouble: two failed attempts yield ``{q}``."""
    q = q.strip()
    if not q:
        raise ValueError("query is empty")
    prompt = prompts.decompose_prompt(q)
    for attempt in (1, 2):
        try:
            tasks = parse_tasks(gen.generate(prompt, temperature=0.0), max_sub_queries)
            return SubQuerySet(q, tasks)
        except (FormatError, ProviderError) as exc:
            logger.info("decomposition attempt %d failed: %s", attempt, exc)
    logger.warning("decomposition failed twice; passing query through unchanged")
    return SubQuerySet(q, (q,))


def passthrough(q: str) -> SubQuerySet:
    return SubQuerySet(q.strip(), (q.strip(),))
