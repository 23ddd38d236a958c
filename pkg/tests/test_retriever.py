import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import gram_schmidt_vectors, oracle_aggregate
from tura.decomposer import SubQuerySet
from tura.errors import ConfigError
from tura.index import MULTI_VECTOR, ServerIndex
from tura.retriever import (
    CandidatePool,
    PoolEntry,
    RetrievalConfig,
    RetrievalDeps,
    aggregate,
    retrieve_per_subquery,
    retrieve_servers,
)


class TableEmbedder:
    """Maps fixed strings to fixed vectors."""

    def __init__(self, table):
        self.table = table
        self.dim = len(next(iter(table.values())))

    def embed_batch(self, texts):
        return np.array([self.table[t] for t in texts])


def _single_server_index(sid, vec):
    return ServerIndex(len(vec), MULTI_VECTOR, [sid], np.array([0]), np.array([vec]), ["doc"])


def test_one_sub_query_pool_is_its_top_n():
    from tura.index import embed, retrieve

    q, vecs = gram_schmidt_vectors([0.9, 0.1, 0.5, 0.3], dim=12)
    idx = ServerIndex(12, MULTI_VECTOR, ["a", "b", "c", "d"], np.arange(4), vecs, ["doc"] * 4)
    emb = TableEmbedder({"q": q})
    pool = retrieve_per_subquery(idx, SubQuerySet("q", ("q",)), 2, emb)
    assert [(e.server_id, e.score) for e in pool] == [(h.server_id, h.score)
                                                      for h in retrieve(idx, embed("q", emb), 2)]


def test_same_server_from_two_sub_queries_kept_twice():
    # server S is a fixed unit vector; sub-query vectors have cosine 0.8 and 0.6 with it
    s, subs = gram_schmidt_vectors([0.8, 0.6], dim=8)
    idx = _single_server_index("S", s)
    emb = TableEmbedder({"first": subs[0], "second": subs[1]})
    pool = retrieve_per_subquery(idx, SubQuerySet("q", ("first", "second")), 5, emb)
    got = [(e.server_id, round(e.score, 12), e.sub_query) for e in pool]
    assert got == [("S", 0.8, 0), ("S", 0.6, 1)]


def test_pool_cardinality_bound():
    rng = np.random.default_rng(1)
    vecs = rng.normal(size=(30, 8))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    idx = ServerIndex(8, MULTI_VECTOR, [f"s{i}" for i in range(30)], np.arange(30), vecs,
                      ["doc"] * 30)
    texts = [f"t{i}" for i in range(4)]
    emb = TableEmbedder({t: rng.normal(size=8) for t in texts})
    assert len(retrieve_per_subquery(idx, SubQuerySet("q", tuple(texts)), 5, emb)) <= 20


def test_aggregate_max_and_ties():
    pool = [PoolEntry("A", 0.8, 0), PoolEntry("A", 0.6, 1), PoolEntry("B", 0.7, 1)]
    assert aggregate(pool, 2).servers == (("A", 0.8), ("B", 0.7))
    assert aggregate([PoolEntry("B", 0.5, 0), PoolEntry("A", 0.5, 1)], 1).servers == (("A", 0.5),)


def test_aggregate_rejects_bad_k():
    with pytest.raises(ValueError):
        aggregate(CandidatePool(()), 0)
    with pytest.raises(ConfigError):
        RetrievalConfig(k=0)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("ABCDEFGHIJ"),
                          st.integers(-4, 4).map(lambda x: x / 4)), max_size=100),
       st.integers(1, 12))
def test_aggregate_matches_oracle(entries, k):
    pool = CandidatePool(tuple(PoolEntry(s, v, i % 3) for i, (s, v) in enumerate(entries)))
    assert list(aggregate(pool, k).servers) == oracle_aggregate(entries, k)


def test_k_larger_than_corpus(beijing_fast):
    from tura.offline import build_pipeline

    pipe = build_pipeline(beijing_fast.fleet, beijing_fast.replay)
    res = retrieve_servers("weather in Beijing", pipe.retrieval,
                           RetrievalConfig(k=50, top_n_per_subquery=50,
                                           decompose=False))
    assert sorted(res.server_ids) == sorted(beijing_fast.fleet.registry)
    scores = [v for _, v in res.servers]
    assert scores == sorted(scores, reverse=True)


def test_ablation_needs_doc_index(beijing_fast):
    from tura.offline import build_pipeline

    deps = build_pipeline(beijing_fast.fleet, beijing_fast.replay).retrieval
    deps.doc_index = None
    with pytest.raises(ConfigError):
        retrieve_servers("x", deps, RetrievalConfig(augment=False, decompose=False))


def test_decomposition_disabled_never_calls_provider(beijing_fast):
    from tura.offline import build_pipeline
    from tura.providers import ReplayProvider

    deps = build_pipeline(beijing_fast.fleet, beijing_fast.replay).retrieval
    deps.decomposer = ReplayProvider()  # would raise if asked
    res = retrieve_servers("hotel in Beijing", deps, RetrievalConfig(decompose=False))
    assert res.sub_queries.sub_queries == ("hotel in Beijing",)


# --------------------------------------------------------------------------- synthetic corpus


@pytest.fixture(scope="module")
def bench_setup():
    from tura.bench import BENCH_DIM, BenchCorpus, BenchIndexes, ScriptedAugmenter
    from tura.index import HashingEmbedder

    corpus = BenchCorpus()
    emb = HashingEmbedder(BENCH_DIM)
    return corpus, BenchIndexes.build(corpus.registry, ScriptedAugmenter(corpus), emb)


BEIJING_SERVERS = ("weather", "top-attractions", "hotel-booking", "path-planner")


def _beijing_cases(corpus, n):
    from tura.bench import BenchCase

    out = []
    for s in range(n):
        rng = random.Random(s)
        frags = tuple(corpus.fragment(rng, sid) for sid in BEIJING_SERVERS)
        out.append(BenchCase(f"bj{s}", ", and ".join(frags), BEIJING_SERVERS, 4, "multi_hop",
                             frags))
    return out


def test_beijing_style_query_full_config(bench_setup):
    from tura.bench import CaseDecomposer

    corpus, idx = bench_setup
    [case] = _beijing_cases(corpus, 1)
    deps = RetrievalDeps(index=idx.augmented, embedder=idx.embedder,
                         decomposer=CaseDecomposer([case]))
    assert set(BEIJING_SERVERS) <= set(retrieve_servers(case.query, deps).server_ids)


def test_decomposition_helps_on_multi_intent_slice(bench_setup):
    from tura.bench import CaseDecomposer

    corpus, idx = bench_setup
    cases = _beijing_cases(corpus, 40)
    deps = RetrievalDeps(index=idx.augmented, embedder=idx.embedder,
                         decomposer=CaseDecomposer(cases))

    def hits(cfg):
        return sum(len(set(retrieve_servers(c.query, deps, cfg).server_ids) & set(BEIJING_SERVERS))
                   for c in cases)

    assert hits(RetrievalConfig()) > hits(RetrievalConfig(decompose=False))
