"""Shared builders and brute-force oracles for the test suite."""

from __future__ import annotations

import contextlib
import gc
import random

import numpy as np

from tura.executor import SUCCESS, Action, Step, Trajectory
from tura.registry import ParamSpec, Registry, ServerDescriptor, ToolSchema

# --------------------------------------------------------------------------- oracles


def oracle_maxsim(server_vectors: dict[str, list[list[float]]], query: list[float]) -> dict[str, float]:
    """Every cosine by explicit loops, max per server. Inputs are assumed unit-norm."""
    out = {}
    for sid, vecs in server_vectors.items():
        best = None
        for v in vecs:
            s = 0.0
            for a, b in zip(v, query):
                s += a * b
            best = s if best is None or s > best else best
        out[sid] = best
    return out


def oracle_rank(scores: dict[str, float], top_n: int) -> list[tuple[str, float]]:
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]


def oracle_aggregate(entries: list[tuple[str, float]], k: int) -> list[tuple[str, float]]:
    groups: dict[str, list[float]] = {}
    for sid, score in entries:
        groups.setdefault(sid, []).append(score)
    return sorted(((s, max(v)) for s, v in groups.items()), key=lambda kv: (-kv[1], kv[0]))[:k]


def gram_schmidt_vectors(cosines: list[float], dim: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """A unit query and unit vectors whose cosines with it are exactly ``cosines``."""
    rng = np.random.default_rng(seed)
    basis = []
    for _ in range(len(cosines) + 1):
        v = rng.normal(size=dim)
        for b in basis:
            v -= (v @ b) * b
        basis.append(v / np.linalg.norm(v))
    q = basis[0]
    vecs = [c * q + np.sqrt(1 - c * c) * basis[i + 1] for i, c in enumerate(cosines)]
    return q, np.array(vecs)


def oracle_waves(tasks: list[str], edges: list[tuple[str, str]]) -> list[set[str]]:
    """Layering by longest distance from a source."""
    depth: dict[str, int] = {}

    def d(t: str) -> int:
        if t not in depth:
            parents = [a for a, b in edges if b == t]
            depth[t] = 1 + max((d(p) for p in parents), default=-1)
        return depth[t]

    for t in tasks:
        d(t)
    n = max(depth.values()) + 1 if depth else 0
    return [{t for t in tasks if depth[t] == i} for i in range(n)]


def random_dag(rng: random.Random, max_tasks: int = 12, p: float = 0.3) -> tuple[list[str], list[str]]:
    n = rng.randint(1, max_tasks)
    ids = [f"T{i + 1}" for i in range(n)]
    edges = [f"{ids[a]}->{ids[b]}" for b in range(n) for a in range(b) if rng.random() < p]
    return ids, edges


# --------------------------------------------------------------------------- registries


def weather_tool() -> ToolSchema:
    return ToolSchema("get_weather", "Daily forecast for one city and date.", (
        ParamSpec("city", "string", True, "City name"),
        ParamSpec("date", "string", True, "ISO date", pattern=r"\d{4}-\d{2}-\d{2}"),
    ))


def small_registry() -> Registry:
    return Registry([
        ServerDescriptor("weather", "Weather forecasts for a city and date.", (weather_tool(),)),
        ServerDescriptor("hotel-booking", "Book hotel rooms.", (
            ToolSchema("book_hotel", "Reserve a room.", (
                ParamSpec("city", "string", True),
                ParamSpec("nights", "integer", True),
                ParamSpec("tier", "enum", False, values=("budget", "luxury")),
            )),
        )),
    ])


# --------------------------------------------------------------------------- curation fixture

CITIES = ("Beijing", "Shanghai", "Paris", "Tokyo", "London")


def _call(city: str, date: str) -> Action:
    return Action("get_weather", {"city": city, "date": date})


def clean_trajectory(i: int) -> Trajectory:
    city = CITIES[i % len(CITIES)]
    date = f"2025-06-{10 + i % 15:02d}"
    obs = f"{city} {date}: sunny"
    steps = [Step(obs, f"look up {city}", _call(city, date)),
             Step("", "done", None, f"{city} on {date}: sunny")]
    return Trajectory(f"t{i:03d}", f"weather in {city} on {date}", "weather", steps, SUCCESS,
                      f"{city} on {date}: sunny")


def schema_fault(i: int) -> Trajectory:
    t = clean_trajectory(i)
    city = CITIES[i % len(CITIES)]
    t.steps[0] = Step("error", "look up", _call(city, "tomorrow"))
    return t


def duplicate_fault(i: int) -> Trajectory:
    t = clean_trajectory(i)
    t.steps.insert(1, t.steps[0])
    return t


def curation_fixture(seed: int = 0) -> tuple[list[Trajectory], set[str], set[str]]:
    """100 trajectories: 10 schema faults, 10 consecutive duplicate calls, 80 clean.

    Returns the shuffled batch plus the ids of schema and duplicate faults.
    """
    kinds = ["schema"] * 10 + ["dup"] * 10 + ["clean"] * 80
    random.Random(seed).shuffle(kinds)
    out, schema, dup = [], set(), set()
    for i, k in enumerate(kinds):
        if k == "schema":
            t = schema_fault(i)
            schema.add(t.task_id)
        elif k == "dup":
            t = duplicate_fault(i)
            dup.add(t.task_id)
        else:
            t = clean_trajectory(i)
        out.append(t)
    return out, schema, dup


# --------------------------------------------------------------------------- protocol fuzzing

_SAMPLES = {
    r"\d{4}-\d{2}-\d{2}": lambda r: f"{r.randint(2000, 2030)}-{r.randint(1, 12):02d}-{r.randint(1, 28):02d}",
}


def _valid_value(spec, rng):
    if spec.type == "string":
        if spec.pattern is not None:
            return _SAMPLES[spec.pattern](rng)
        return rng.choice(["Beijing", "Paris", "", "x y z", "北京"])
    if spec.type == "integer":
        return rng.randint(-5, 100)
    if spec.type == "number":
        return rng.choice([0, 1.5, -2.25, 100])
    if spec.type == "boolean":
        return rng.random() < 0.5
    return rng.choice(list(spec.values))


def _wrong_value(spec, rng):
    """A value that violates ``spec`` (type, pattern or enum)."""
    if spec.type == "string":
        if spec.pattern is not None and rng.random() < 0.5:
            return rng.choice(["tomorrow", "2025/06/10", "10-06-2025", ""])
        return rng.choice([1, 2.5, None, ["a"], {"k": 1}, True])
    if spec.type == "integer":
        return rng.choice(["3", 2.5, True, None])
    if spec.type == "number":
        return rng.choice(["1.0", True, None, [1]])
    if spec.type == "boolean":
        return rng.choice([0, 1, "true", None])
    return rng.choice(["not-a-member", 1, None])


def valid_params(tool, rng):
    out = {}
    for spec in tool.parameters:
        if spec.required or rng.random() < 0.5:
            out[spec.name] = _valid_value(spec, rng)
    return out


def malformed_params(tool, rng):
    """Valid params with exactly one kind of defect injected."""
    params = valid_params(tool, rng)
    required = [p for p in tool.parameters if p.required]
    kind = rng.choice(["missing", "wrong", "extra"] if required else ["wrong", "extra"])
    if kind == "missing":
        del params[rng.choice(required).name]
    elif kind == "wrong" and tool.parameters:
        spec = rng.choice(tool.parameters)
        params[spec.name] = _wrong_value(spec, rng)
    else:
        params["zz_unexpected"] = 1
    return params


def fuzz_envelopes(registry, n, seed=0):
    """``n`` well-formed requests and, per request, the error code an honest server must give.

    The expected code is ``None`` when the request should succeed or reach the
    behaviour table (whose answer is fixture data, not protocol).
    """
    rng = random.Random(seed)
    sids = list(registry)
    out = []
    for i in range(n):
        rid = f"f{i}" if rng.random() < 0.7 else i
        roll = rng.random()
        if roll < 0.1:
            out.append(({"method": "tools/list", "server_id": rng.choice(sids),
                         "request_id": rid}, None))
            continue
        if roll < 0.15:
            out.append(({"method": "tools/call", "server_id": "no-such-server", "tool": "x",
                         "params": {}, "request_id": rid}, "unknown_server"))
            continue
        desc = registry[rng.choice(sids)]
        if roll < 0.25:
            out.append(({"method": "tools/call", "server_id": desc.server_id, "tool": "no_such_tool",
                         "params": {}, "request_id": rid}, "unknown_tool"))
            continue
        tool = rng.choice(desc.tools)
        if roll < 0.6:
            params, expect = malformed_params(tool, rng), "invalid_params"
        else:
            params, expect = valid_params(tool, rng), None
        out.append(({"method": "tools/call", "server_id": desc.server_id, "tool": tool.name,
                     "params": params, "request_id": rid}, expect))
    return out


# --------------------------------------------------------------------------- timing


@contextlib.contextmanager
def settled_heap():
    """Freeze objects left by earlier tests so a full GC pass cannot land inside a timing window."""
    gc.collect()
    gc.freeze()
    try:
        yield
    finally:
        gc.unfreeze()
