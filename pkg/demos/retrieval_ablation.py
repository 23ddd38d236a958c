"""Recall@5 on the seeded synthetic benchmark for every ablation config,
followed by a short N_Q sweep. Takes a few seconds."""

from tura.bench import (
    BENCH_DIM,
    BenchCorpus,
    BenchIndexes,
    ScriptedAugmenter,
    eval_nq_sweep,
    eval_retrieval,
    generate_benchmark,
)
from tura.index import HashingEmbedder

corpus = BenchCorpus()
cases = generate_benchmark(corpus, seed=7)
embedder = HashingEmbedder(BENCH_DIM)
indexes = BenchIndexes.build(corpus.registry, ScriptedAugmenter(corpus), embedder)

report = eval_retrieval(cases, indexes)
print(report.table())

# one case, seen the way the full config sees it
case = next(c for c in cases if c.intent_count == 3)
print("\nexample query:", case.query)
print("ground truth: ", ", ".join(case.ground_truth_servers))
print("full top-5:   ", ", ".join(report.dumps["full"][cases.index(case)]))
print("no decompose: ", ", ".join(report.dumps["no_decompose"][cases.index(case)]))

curve = eval_nq_sweep(corpus.registry, ScriptedAugmenter(corpus), cases, [0, 5, 10, 20, 40],
                      embedder)
print("\nN_Q sweep:", "  ".join(f"{n}: {r:.3f}" for n, r in curve.items()))
