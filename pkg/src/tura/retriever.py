"""Stage-1 server retrieval: per-sub-query MaxSim search, pool union, max aggregation."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

from .decomposer import SubQuerySet, decompose, passthrough
from .errors import ConfigError
from .index import EmbeddingProvider, ServerIndex, embed_many
from .providers import TextGenerator

DEFAULT_K = 5
DEFAULT_TOP_N = 5


@dataclass(frozen=True)
class PoolEntry:
    server_id: str
    score: float
    sub_query: int


@dataclass(frozen=True)
class CandidatePool:
    entries: tuple[PoolEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class RetrievalResult:
    servers: tuple[tuple[str, float], ...]
    sub_queries: SubQuerySet | None = None
    pool: CandidatePool | None = None

    @property
    def k_retrieved(self) -> int:
        return len(self.servers)

    @property
    def server_ids(self) -> list[str]:
        return [s for s, _ in self.servers]

    def score_of(self, server_id: str) -> float | None:
        for s, v in self.servers:
            if s == server_id:
                return v
        return None

    def to_dict(self) -> dict:
        d: dict = {
            "servers": [{"server_id": s, "score": v} for s, v in self.servers],
            "k_retrieved": self.k_retrieved,
        }
        if self.sub_queries is not None:
            d["sub_queries"] = list(self.sub_queries.sub_queries)
        if self.pool is not None:
            d["pool"] = [{"server_id": e.server_id, "score": e.score, "sub_query": e.sub_query}
                         for e in self.pool]
        return d


def retrieve_per_subquery(index: ServerIndex, sqs: SubQuerySet, top_n: int,
                          provider: EmbeddingProvider) -> CandidatePool:
    """Union of each sub-query's top-``top_n`` list, tagged with the sub-query index.

    All sub-queries are embedded and scored in one batch; entries are ordered by
    (sub-query, rank), so the pool does not depend on evaluation order.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    if len(index) == 0:
        return CandidatePool(())
    qv = embed_many(list(sqs.sub_queries), provider)
    scores = index.scores(qv)
    entries = []
    for j, row in enumerate(scores):
        entries += [PoolEntry(s.server_id, s.score, j) for s in index.ranked(row, top_n)]
    return CandidatePool(tuple(entries))


def aggregate(pool: CandidatePool | Iterable[PoolEntry], k: int) -> RetrievalResult:
    """Score each server by its best entry in the pool; keep the top ``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    best: dict[str, float] = {}
    for e in pool:
        if e.server_id not in best or e.score > best[e.server_id]:
            best[e.server_id] = e.score
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    return RetrievalResult(tuple(ranked))


@dataclass
class RetrievalConfig:
    k: int = DEFAULT_K
    top_n_per_subquery: int = DEFAULT_TOP_N
    decompose: bool = True
    augment: bool = True

    def __post_init__(self):
        if self.k < 1 or self.top_n_per_subquery < 1:
            raise ConfigError("k and top_n_per_subquery must be >= 1")


@dataclass
class RetrievalDeps:
    """What stage 1 needs. ``doc_index`` serves the no-augmentation ablation."""

    index: ServerIndex
    embedder: EmbeddingProvider
    decomposer: TextGenerator | None = None
    doc_index: ServerIndex | None = None


def retrieve_servers(q: str, deps: RetrievalDeps, config: RetrievalConfig | None = None,
                     sqs: SubQuerySet | None = None) -> RetrievalResult:
    """Decompose (unless disabled), search per sub-query, aggregate, cut at K.

    ``sqs`` may be supplied to reuse an existing decomposition.
    """
    config = config or RetrievalConfig()
    if config.augment:
        index = deps.index
    else:
        if deps.doc_index is None:
            raise ConfigError("augmentation disabled but no doc-only index supplied")
        index = deps.doc_index
    if not config.decompose:
        sqs = passthrough(q)
    elif sqs is None:
        if deps.decomposer is None:
            raise ConfigError("decomposition enabled but no decomposer provider supplied")
        sqs = decompose(q, deps.decomposer)
    pool = retrieve_per_subquery(index, sqs, config.top_n_per_subquery, deps.embedder)
    result = aggregate(pool, config.k)
    return RetrievalResult(result.servers, sqs, pool)

