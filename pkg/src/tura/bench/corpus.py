"""Synthetic benchmark fleet, scripted augmentation, and case generation.

Cases are composed from per-server fragments written in user vocabulary.
Ground truth is known by construction, and so is the decomposition: each
fragment is one intent, and a scripted decomposer hands them back.
"""

from __future__ import annotations

import json
import random
import re
import zlib
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..errors import BenchmarkError
from ..prompts import DECOMPOSE_HEADER, TOOL_PROFILE_HEADER
from ..registry import ParamSpec, Registry, ServerDescriptor, ToolSchema
from ..sim.fleet import Fleet, LatencyProfile
from .topics import CITIES, JOINERS, OPENERS, TIMES, TOPICS, Topic

SIMPLE, MULTI_HOP = "simple", "multi_hop"
DEFAULT_SIZES: dict[int, int] = {1: 60, 2: 40, 3: 70, 4: 80}
BENCH_DIM = 512
AUGMENT_POOL = 60

_STOP = frozenset("a an and at between by for from in into of on or the to with".split())
_SERVER_LINE = re.compile(r"^Server: (.+)$", re.MULTILINE)
_COUNT_LINE = re.compile(r"^Write (\d+) queries\.$", re.MULTILINE)
_QUERY_LINE = re.compile(r"^User Query: (.*)$", re.MULTILINE)


def formal_terms(description: str) -> tuple[str, ...]:
    words = re.findall(r"[a-z][a-z-]+", description.lower())
    return tuple(dict.fromkeys(w for w in words if w not in _STOP and len(w) > 2))


def _rng(*parts: object) -> random.Random:
    return random.Random(zlib.crc32("\x1f".join(map(str, parts)).encode("utf-8")))


def facets(topic: Topic, n: int) -> list[tuple[str, ...]]:
    """Split a topic's vocabulary into ``n`` contiguous capability facets."""
    size = -(-len(topic.vernacular) // n)
    return [topic.vernacular[i:i + size] for i in range(0, len(topic.vernacular), size)]


def distinctive_terms(topics: Sequence[Topic]) -> dict[str, tuple[str, ...]]:
    """Description words that occur in exactly one topic's description."""
    terms = {t.server_id: formal_terms(t.description) for t in topics}
    counts: dict[str, int] = {}
    for ws in terms.values():
        for w in ws:
            counts[w] = counts.get(w, 0) + 1
    return {sid: tuple(w for w in ws if counts[w] == 1) or ws for sid, ws in terms.items()}


def _phrase(rng: random.Random, topic: Topic, formal: Sequence[str], n_vernacular: int,
            p_formal: float, n_formal: int, p_context: float, p_opener: float,
            n_facets: int, shuffle: bool = True) -> str:
    facet = rng.choice(facets(topic, n_facets))
    words = rng.sample(facet, min(n_vernacular, len(facet)))
    if rng.random() < p_formal:
        words += rng.sample(list(formal), min(n_formal, len(formal)))
    if shuffle:
        rng.shuffle(words)
    else:
        order = {w: i for i, w in enumerate(topic.vernacular + tuple(formal))}
        words.sort(key=order.__getitem__)
    parts = [rng.choice(OPENERS) if rng.random() < p_opener else "", " ".join(words)]
    if rng.random() < p_context:
        ctx = rng.choice((f"in {rng.choice(CITIES)}", rng.choice(TIMES),
                          f"in {rng.choice(CITIES)} {rng.choice(TIMES)}"))
        parts.append(ctx)
    return " ".join(p for p in parts if p)


@dataclass(frozen=True)
class CorpusParams:
    """Knobs for fragment and synthetic-query wording.

    User fragments speak one facet of a server in everyday words, often
    borrow a few description words, and carry openers and context. Synthetic
    queries stick to everyday words of one facet in a stable order.
    """

    facets: int = 3
    fragment_vernacular: int = 2
    fragment_formal: float = 0.9
    fragment_formal_words: int = 3
    fragment_context: float = 0.8
    fragment_opener: float = 1.0
    query_vernacular: int = 3
    query_formal: float = 0.2
    query_context: float = 0.0
    query_opener: float = 0.0
    query_shuffle: bool = False


class BenchCorpus:
    """The benchmark fleet plus the scripted text that goes with it."""

    def __init__(self, topics: Sequence[Topic] = TOPICS, params: CorpusParams | None = None):
        if len({t.server_id for t in topics}) != len(topics):
            raise BenchmarkError("duplicate server ids in topic table")
        self.topics = {t.server_id: t for t in topics}
        self.params = params or CorpusParams()
        self.formal = distinctive_terms(topics)
        self.registry = Registry([self._descriptor(t) for t in topics])

    @staticmethod
    def _descriptor(t: Topic) -> ServerDescriptor:
        tool = ToolSchema(t.tool, t.description,
                          (ParamSpec("request", "string", True, "What the user wants"),))
        return ServerDescriptor(t.server_id, t.description, (tool,))

    def behaviors(self) -> dict[str, dict[str, dict[str, Any]]]:
        return {t.server_id: {t.tool: {"*": f"{t.server_id} handled the request"}}
                for t in self.topics.values()}

    def fleet(self, latency: LatencyProfile | None = None) -> Fleet:
        return Fleet(self.registry, self.behaviors(), latency)

    def synthetic_queries(self, server_id: str, n: int = AUGMENT_POOL) -> list[str]:
        """What a generous query-writing model would say about ``server_id``.

        A stable prefix: asking for fewer queries yields the head of the same list.
        """
        topic = self.topics[server_id]
        p = self.params
        rng = _rng("augment", server_id)
        out: list[str] = []
        seen = {topic.description}
        guard = 0
        while len(out) < n and guard < n * 50:
            guard += 1
            q = _phrase(rng, topic, self.formal[server_id], p.query_vernacular, p.query_formal,
                        1, p.query_context, p.query_opener, p.facets, p.query_shuffle)
            if q not in seen:
                seen.add(q)
                out.append(q)
        return out

    def fragment(self, rng: random.Random, server_id: str) -> str:
        p = self.params
        return _phrase(rng, self.topics[server_id], self.formal[server_id],
                       p.fragment_vernacular, p.fragment_formal, p.fragment_formal_words,
                       p.fragment_context, p.fragment_opener, p.facets)


class ScriptedAugmenter:
    """Answers tool-profile prompts from :meth:`BenchCorpus.synthetic_queries`."""

    def __init__(self, corpus: BenchCorpus):
        self.corpus = corpus

    def generate(self, prompt: str, *, temperature: float | None = None) -> str:
        from ..errors import ProviderError

        if TOOL_PROFILE_HEADER not in prompt:
            raise ProviderError("scripted augmenter only answers tool-profile prompts")
        sid = _SERVER_LINE.search(prompt)
        count = _COUNT_LINE.search(prompt)
        if sid is None or count is None or sid.group(1) not in self.corpus.topics:
            raise ProviderError("tool-profile prompt without a known server")
        return json.dumps(self.corpus.synthetic_queries(sid.group(1), int(count.group(1))))


@dataclass(frozen=True)
class BenchCase:
    case_id: str
    query: str
    ground_truth_servers: tuple[str, ...]
    intent_count: int
    complexity: str
    sub_queries: tuple[str, ...]
    dependencies: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.intent_count < 1:
            raise BenchmarkError(f"{self.case_id}: intent_count must be >= 1")
        if len(self.ground_truth_servers) != self.intent_count:
            raise BenchmarkError(f"{self.case_id}: ground truth size differs from intent_count")

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "query": self.query,
            "ground_truth_servers": list(self.ground_truth_servers),
            "intent_count": self.intent_count,
            "complexity": self.complexity,
            "sub_queries": list(self.sub_queries),
            "dependencies": list(self.dependencies),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BenchCase":
        return cls(d["case_id"], d["query"], tuple(d["ground_truth_servers"]),
                   int(d["intent_count"]), d["complexity"], tuple(d.get("sub_queries", ())),
                   tuple(d.get("dependencies", ())))


def generate_benchmark(corpus: BenchCorpus, seed: int,
                       sizes: Mapping[int, int] | None = None,
                       edge_probability: float = 0.35) -> list[BenchCase]:
    """Seeded cases; ``sizes`` maps intent count to how many cases to emit.

    Multi-intent cases also get a random dependency DAG (edges point from a
    lower to a higher task index) for planner benchmarks.
    """
    sizes = dict(DEFAULT_SIZES if sizes is None else sizes)
    servers = sorted(corpus.topics)
    for k, n in sizes.items():
        if k < 1 or n < 0:
            raise BenchmarkError(f"invalid size entry {k}: {n}")
        if k > len(servers):
            raise BenchmarkError(f"{k} intents requested but the fleet has {len(servers)} servers")
    rng = random.Random(seed)
    plan = [k for k in sorted(sizes) for _ in range(sizes[k])]
    rng.shuffle(plan)
    cases = []
    for i, k in enumerate(plan):
        truth = rng.sample(servers, k)
        frags = [corpus.fragment(rng, s) for s in truth]
        query = frags[0]
        for f in frags[1:]:
            query += rng.choice(JOINERS) + f
        deps = tuple(f"T{a + 1}->T{b + 1}" for b in range(k) for a in range(b)
                     if rng.random() < edge_probability)
        cases.append(BenchCase(f"case-{i:04d}", query, tuple(truth), k,
                               SIMPLE if k == 1 else MULTI_HOP, tuple(frags), deps))
    return cases


class CaseDecomposer:
    """Answers decomposition prompts with each case's known fragments."""

    def __init__(self, cases: Sequence[BenchCase]):
        self._by_query = {c.query: list(c.sub_queries) for c in cases}

    def generate(self, prompt: str, *, temperature: float | None = None) -> str:
        from ..errors import ProviderError

        m = _QUERY_LINE.search(prompt) if DECOMPOSE_HEADER in prompt else None
        if m is None or m.group(1) not in self._by_query:
            raise ProviderError("no scripted decomposition for this prompt")
        return json.dumps({"tasks": self._by_query[m.group(1)]})


def write_cases(cases: Sequence[BenchCase], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in cases:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_cases(path: str | Path) -> list[BenchCase]:
    return [BenchCase.from_dict(json.loads(line))
            for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]

