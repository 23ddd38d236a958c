"""Command-line entry point: ``tura <group> <command> ...``.

Every command that needs an LLM uses the remote provider when
``TURA_LLM_ENDPOINT`` is set and a replay file otherwise. Without
``--replay`` the built-in Beijing fixture's replay script is used, so the
whole tool works offline.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .errors import ConfigError, TuraError

log = logging.getLogger("tura")

EXIT_FAIL = 1
EXIT_ERROR = 2


def _dump(obj: Any, out: str | None = None) -> None:
    text = json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _mode_name(raw: str) -> str:
    return raw.replace("-", "_")


def _workers(raw: str) -> int | None:
    if raw == "unbounded":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'unbounded'") from None
    if n < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return n


# --------------------------------------------------------------------------- providers


def _fixture(args):
    from .offline import load_fixture

    return load_fixture(getattr(args, "offline", None) or None)


def _generator(args, fixture=None):
    """Remote provider, explicit replay file, or the fixture's replay script."""
    from .offline import BUILTIN_FIXTURE, fresh_replay
    from .providers import default_text_generator

    if getattr(args, "offline", None) is not None and fixture is not None:
        return fresh_replay(fixture)
    if getattr(args, "replay", None):
        return default_text_generator(args.replay)
    root = fixture.root if fixture is not None else BUILTIN_FIXTURE
    return default_text_generator(root / "replay.json")


def _pipeline(args):
    from .index import ServerIndex, default_embedder
    from .offline import build_pipeline
    from .retriever import RetrievalDeps

    fixture = _fixture(args)
    gen = _generator(args, fixture)
    pipeline = build_pipeline(fixture.fleet, gen, dim=args.dim)
    if getattr(args, "index", None):
        index = ServerIndex.load(args.index)
        pipeline.retrieval = RetrievalDeps(index=index, embedder=default_embedder(index.dim),
                                           decomposer=gen)
    return fixture, pipeline


def _answer_config(args):
    from .executor import AnswerConfig
    from .retriever import RetrievalConfig

    cfg = AnswerConfig(retrieval=RetrievalConfig(k=args.k, decompose=not args.no_decompose))
    if hasattr(args, "budget_ms"):
        cfg.budget = args.budget_ms / 1000
        cfg.mode = _mode_name(args.mode)
        cfg.workers = args.workers
    return cfg


# --------------------------------------------------------------------------- registry / index


def cmd_registry_validate(args) -> int:
    from .registry import load_registry

    reg = load_registry(args.path)
    tools = sum(len(d.tools) for d in reg.descriptors)
    print(f"ok: {len(reg)} servers, {tools} tools")
    return 0


def cmd_registry_augment(args) -> int:
    from .registry import Registry, augment_server, load_registry

    reg = load_registry(args.path)
    gen = _generator(args)
    aug = Registry([augment_server(d, gen, args.n_q, args.temperature) for d in reg.descriptors])
    text = aug.to_yaml()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_index_build(args) -> int:
    from .index import build_index, default_embedder
    from .registry import build_augmented_document, build_doc_only_document, load_registry

    reg = load_registry(args.registry)
    make = build_doc_only_document if args.doc_only else build_augmented_document
    index = build_index([make(d) for d in reg.descriptors], default_embedder(args.dim),
                        _mode_name(args.mode))
    index.save(args.out)
    print(f"wrote {args.out}: {len(index.server_ids)} servers, {len(index.vectors)} vectors, "
          f"dim {index.dim}, {index.mode}")
    return 0


# --------------------------------------------------------------------------- stages


def cmd_decompose(args) -> int:
    from .decomposer import decompose

    _dump(decompose(args.query, _generator(args)).to_dict())
    return 0


def cmd_retrieve(args) -> int:
    from .retriever import RetrievalConfig, retrieve_servers

    _, pipeline = _pipeline(args)
    cfg = RetrievalConfig(k=args.k, decompose=not args.no_decompose)
    _dump(retrieve_servers(args.query, pipeline.retrieval, cfg).to_dict())
    return 0


def cmd_plan(args) -> int:
    from .executor import plan_query

    _, pipeline = _pipeline(args)
    _dump(plan_query(args.query, pipeline, _answer_config(args))[2].to_dict())
    return 0


def cmd_run(args) -> int:
    from .executor import answer

    _, pipeline = _pipeline(args)
    report = asyncio.run(answer(args.query, pipeline, _answer_config(args)))
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for rec in report.trace_records():
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    if args.report:
        _dump(report.to_dict(timing=True), args.report)
    print(report.final_answer or "")
    for tid in sorted(report.trajectories):
        t = report.trajectories[tid]
        if not t.succeeded:
            print(f"{tid} ({t.server_id}): {t.outcome}", file=sys.stderr)
    return 0 if report.success_count > 0 else EXIT_FAIL


# --------------------------------------------------------------------------- distill


def _read_tasks(path: str):
    from .planner import SubTask

    tasks = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        d = json.loads(line)
        try:
            tasks.append(SubTask(d.get("task_id", f"T{i + 1}"),
                                 d.get("refined_query", d.get("query")),
                                 d.get("server_id", d.get("server"))))
        except AttributeError:
            raise ConfigError(f"{path}:{i + 1}: each line must be a JSON object") from None
        if not tasks[-1].refined_query or not tasks[-1].server_id:
            raise ConfigError(f"{path}:{i + 1}: task needs a query and a server")
    return tasks


def cmd_distill_synth(args) -> int:
    from .distill import expert_set, synthesize_expert, write_trajectories
    from .sim.fleet import LocalClient

    fixture = _fixture(args)
    trajs = asyncio.run(synthesize_expert(_read_tasks(args.tasks), _generator(args, fixture),
                                          LocalClient(fixture.fleet), variant=args.variant))
    kept = trajs if args.keep_failures else expert_set(trajs)
    write_trajectories(kept, args.out)
    print(f"{len(kept)} of {len(trajs)} trajectories written to {args.out}")
    return 0 if kept else EXIT_FAIL


def cmd_distill_curate(args) -> int:
    from .distill import CurateConfig, curate_report, read_trajectories, write_dataset, write_verdicts
    from .registry import load_registry

    registry = load_registry(args.registry) if args.registry else _fixture(args).fleet.registry
    expert = read_trajectories(args.expert)
    result = curate_report(expert, registry, CurateConfig(args.percentile, args.min_cohort))
    write_dataset(result.records, args.out)
    if args.report:
        write_verdicts(result.verdicts, args.report)
    print(f"{len(result.records)} records ({result.corrected} corrected) from {len(expert)} "
          f"trajectories")
    return 0


# --------------------------------------------------------------------------- sim


def cmd_sim_serve(args) -> int:
    from .sim.fleet import SocketFleetServer, load_fleet, parse_addr, serve_stdio

    fleet = load_fleet(args.fleet, args.latency)
    if args.socket is None:
        asyncio.run(serve_stdio(fleet))
        return 0

    async def serve() -> None:
        host, port = parse_addr(args.socket)
        server = await SocketFleetServer(fleet, host, port).start()
        print(f"serving {len(fleet.registry)} servers on {server.host}:{server.port}",
              file=sys.stderr, flush=True)
        await asyncio.Event().wait()

    try:
        asyncio.run(serve())
    except KeyboardInterrupt:
        pass
    return 0


# --------------------------------------------------------------------------- bench


def _bench_cases(args, corpus):
    from .bench import generate_benchmark, read_cases

    return read_cases(args.cases) if args.cases else generate_benchmark(corpus, args.seed)


def _finish(report, args) -> int:
    report.meta.setdefault("seed", args.seed)
    _dump(report.to_dict(include_dumps=args.dumps), args.out)
    print(report.table(), file=sys.stderr if not args.out else sys.stdout)
    return 0 if report.passed else EXIT_FAIL


def cmd_bench_gen(args) -> int:
    from .bench import BenchCorpus, write_cases

    cases = _bench_cases(args, BenchCorpus())
    if args.out:
        write_cases(cases, args.out)
        multi = sum(c.intent_count > 1 for c in cases)
        print(f"{len(cases)} cases ({multi} multi-intent) written to {args.out}")
    else:
        for c in cases:
            print(json.dumps(c.to_dict(), ensure_ascii=False, sort_keys=True))
    return 0


def cmd_bench_retrieval(args) -> int:
    from .bench import BenchCorpus, BenchIndexes, ScriptedAugmenter, eval_retrieval
    from .index import HashingEmbedder

    corpus = BenchCorpus()
    cases = _bench_cases(args, corpus)
    indexes = BenchIndexes.build(corpus.registry, ScriptedAugmenter(corpus),
                                 HashingEmbedder(args.dim), args.n_q)
    return _finish(eval_retrieval(cases, indexes, k=args.k), args)


def cmd_bench_nq_sweep(args) -> int:
    from .bench import BenchCorpus, MetricsReport, ScriptedAugmenter, eval_nq_sweep, nq_checks
    from .index import HashingEmbedder

    corpus = BenchCorpus()
    cases = _bench_cases(args, corpus)
    values = sorted(set(args.values))
    report = MetricsReport(meta={"cases": len(cases), "dim": args.dim, "k": args.k})
    report.nq_curve = eval_nq_sweep(corpus.registry, ScriptedAugmenter(corpus), cases, values,
                                    HashingEmbedder(args.dim), k=args.k)
    report.checks.update(nq_checks(report.nq_curve))
    return _finish(report, args)


def cmd_bench_planner(args) -> int:
    from .bench import MetricsReport, eval_planner, makespan_checks
    from .offline import fixture_plan, fresh_replay, load_fixture

    fixture = load_fixture(args.fixture)
    plan = fixture_plan(fixture)
    stats = asyncio.run(eval_planner([plan] * args.repeats, fixture.fleet, fresh_replay(fixture),
                                     concurrency=1, workers=args.workers))
    report = MetricsReport(makespan=stats, meta={"fixture": str(fixture.root),
                                                 "plan": plan.to_dict(),
                                                 "repeats": args.repeats})
    report.checks.update(makespan_checks(stats))
    return _finish(report, args)


# --------------------------------------------------------------------------- parser


def _add_provider_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--replay", metavar="FILE", help="replay script for offline LLM responses")


def _add_fixture_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--offline", nargs="?", const="", default=None, metavar="DIR",
                   help="use a fixture directory (default: the built-in Beijing fixture) "
                        "for the fleet and the replay script")
    p.add_argument("--index", metavar="FILE", help="prebuilt index instead of indexing the fleet")
    p.add_argument("--dim", type=int, default=64, help="embedding dimension (default 64)")
    _add_provider_opts(p)


def _add_query_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("query")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--no-decompose", action="store_true")
    _add_fixture_opts(p)


def _add_bench_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--cases", metavar="FILE", help="read cases instead of generating them")


def build_parser() -> argparse.ArgumentParser:
    from .bench import BENCH_DIM

    parser = argparse.ArgumentParser(prog="tura", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tura {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    groups = parser.add_subparsers(dest="group", required=True)

    reg = groups.add_parser("registry", help="validate or augment descriptors")
    rsub = reg.add_subparsers(dest="command", required=True)
    p = rsub.add_parser("validate")
    p.add_argument("path")
    p.set_defaults(fn=cmd_registry_validate)
    p = rsub.add_parser("augment")
    p.add_argument("path")
    p.add_argument("--n-q", type=int, default=20)
    p.add_argument("--temperature", type=float, default=1.2)
    p.add_argument("--out", metavar="FILE")
    _add_provider_opts(p)
    p.set_defaults(fn=cmd_registry_augment)

    idx = groups.add_parser("index", help="build a server index")
    isub = idx.add_subparsers(dest="command", required=True)
    p = isub.add_parser("build")
    p.add_argument("registry")
    p.add_argument("--mode", choices=("multi-vector", "single-vector"), default="multi-vector")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--doc-only", action="store_true", help="ignore synthetic queries")
    p.set_defaults(fn=cmd_index_build)

    p = groups.add_parser("decompose", help="split a query into sub-queries")
    p.add_argument("query")
    _add_provider_opts(p)
    p.set_defaults(fn=cmd_decompose)

    p = groups.add_parser("retrieve", help="rank servers for a query")
    _add_query_opts(p)
    p.set_defaults(fn=cmd_retrieve)

    p = groups.add_parser("plan", help="print the execution plan for a query")
    _add_query_opts(p)
    p.set_defaults(fn=cmd_plan)

    p = groups.add_parser("run", help="answer a query end to end")
    _add_query_opts(p)
    p.add_argument("--mode", choices=("action-only", "with-thought"), default="action-only")
    p.add_argument("--budget-ms", type=float, default=30000)
    p.add_argument("--workers", type=_workers, default=None, help="N or 'unbounded' (default)")
    p.add_argument("--trace", metavar="FILE", help="write one JSON line per step")
    p.add_argument("--report", metavar="FILE", help="write the full execution report")
    p.set_defaults(fn=cmd_run)

    dist = groups.add_parser("distill", help="expert synthesis and dataset curation")
    dsub = dist.add_subparsers(dest="command", required=True)
    p = dsub.add_parser("synth")
    p.add_argument("--tasks", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--variant", choices=("correctness", "efficiency"), default="correctness")
    p.add_argument("--keep-failures", action="store_true")
    p.add_argument("--offline", nargs="?", const="", default=None, metavar="DIR")
    _add_provider_opts(p)
    p.set_defaults(fn=cmd_distill_synth)
    p = dsub.add_parser("curate")
    p.add_argument("expert")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--report", metavar="FILE", help="write per-stage verdicts")
    p.add_argument("--registry", metavar="PATH", help="descriptors (default: fixture fleet)")
    p.add_argument("--offline", nargs="?", const="", default=None, metavar="DIR")
    p.add_argument("--percentile", type=float, default=95.0)
    p.add_argument("--min-cohort", type=int, default=5)
    p.set_defaults(fn=cmd_distill_curate)

    sim = groups.add_parser("sim", help="mock tool-server fleet")
    ssub = sim.add_subparsers(dest="command", required=True)
    p = ssub.add_parser("serve")
    p.add_argument("--fleet", required=True, metavar="DIR")
    p.add_argument("--latency", metavar="FILE")
    p.add_argument("--socket", metavar="HOST:PORT", help="default: stdin/stdout")
    p.set_defaults(fn=cmd_sim_serve)

    bench = groups.add_parser("bench", help="synthetic benchmarks")
    bsub = bench.add_subparsers(dest="command", required=True)
    p = bsub.add_parser("gen")
    _add_bench_opts(p)
    p.set_defaults(fn=cmd_bench_gen)
    for name, fn in (("retrieval", cmd_bench_retrieval), ("nq-sweep", cmd_bench_nq_sweep)):
        p = bsub.add_parser(name)
        _add_bench_opts(p)
        p.add_argument("--dim", type=int, default=BENCH_DIM)
        p.add_argument("--k", type=int, default=5)
        p.add_argument("--dumps", action="store_true", help="include per-case retrieval lists")
        p.set_defaults(fn=fn)
        if name == "retrieval":
            p.add_argument("--n-q", type=int, default=20)
        else:
            p.add_argument("--values", type=int, nargs="+", default=[0, 5, 10, 20, 30, 40])
    p = bsub.add_parser("planner")
    _add_bench_opts(p)
    p.add_argument("--fixture", metavar="DIR", help="default: built-in Beijing fixture")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--workers", type=_workers, default=None)
    p.add_argument("--dumps", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_bench_planner)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except TuraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
