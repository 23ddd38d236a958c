"""Offline fixtures: a fleet directory plus replay scripts, wired into a :class:`Pipeline`.

A fixture directory contains ``fleet/`` (see :mod:`tura.sim.fleet`),
``replay.json`` (canned LLM responses for every role), and optionally
``latency.json`` and ``scenario.json``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .executor import AnswerConfig, Pipeline, plan_query
from .index import DEFAULT_DIM, MULTI_VECTOR, EmbeddingProvider, HashingEmbedder, build_index
from .planner import Plan
from .providers import ReplayProvider, TextGenerator
from .registry import build_augmented_document, build_doc_only_document
from .retriever import RetrievalDeps
from .sim.fleet import Fleet, LatencyProfile, LocalClient, load_fleet

BUILTIN_FIXTURE = Path(__file__).parent / "data" / "beijing"


@dataclass
class OfflineFixture:
    root: Path
    fleet: Fleet
    replay: ReplayProvider
    scenario: dict[str, Any] = field(default_factory=dict)


def load_fixture(path: str | Path | None = None, *, latency: bool = True) -> OfflineFixture:
    root = Path(path) if path is not None else BUILTIN_FIXTURE
    lat_file = root / "latency.json"
    profile = LatencyProfile.from_file(lat_file) if latency and lat_file.exists() else None
    fleet = load_fleet(root / "fleet", profile)
    replay = ReplayProvider.from_file(root / "replay.json")
    scen_file = root / "scenario.json"
    scenario = json.loads(scen_file.read_text(encoding="utf-8")) if scen_file.exists() else {}
    return OfflineFixture(root, fleet, replay, scenario)


def build_pipeline(fleet: Fleet, gen: TextGenerator, *, embedder: EmbeddingProvider | None = None,
                   dim: int = DEFAULT_DIM, mode: str = MULTI_VECTOR,
                   synth: TextGenerator | None = None) -> Pipeline:
    """Index the fleet's registry and use ``gen`` for every LLM role."""
    embedder = embedder or HashingEmbedder(dim)
    docs = [build_augmented_document(d) for d in fleet.registry.descriptors]
    index = build_index(docs, embedder, mode)
    doc_index = build_index([build_doc_only_document(d) for d in fleet.registry.descriptors],
                            embedder, mode)
    deps = RetrievalDeps(index=index, embedder=embedder, decomposer=gen, doc_index=doc_index)
    return Pipeline(fleet.registry, deps, planner=gen, agent=gen, client=LocalClient(fleet),
                    synth=synth)


def fresh_replay(fixture: OfflineFixture) -> ReplayProvider:
    """A replay provider with reset hit counters (for repeated runs)."""
    return ReplayProvider(fixture.replay.rules)


def fixture_plan(fixture: OfflineFixture, query: str | None = None,
                 config: AnswerConfig | None = None) -> Plan:
    """The plan the scripted planner produces for ``query`` (default: the scenario query)."""
    q = query or fixture.scenario["query"]
    gen = fresh_replay(fixture)
    return plan_query(q, build_pipeline(fixture.fleet, gen), config)[2]
