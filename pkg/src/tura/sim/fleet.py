"""Deterministic mock tool servers with per-tool latency injection.

A fleet directory holds one sub-directory per server::

    fleet/
      weather/server.yaml      # descriptor (see tura.registry)
      weather/behavior.json    # {"get_weather": {"<canonical params>": "result", "*": "default"}}

A behaviour entry may be ``{"error": {"code": ..., "message": ...}}`` to
simulate a failing tool. Latency profiles are JSON, either nested
``{"weather": {"get_weather": 230}}`` or flat ``{"weather.get_weather": 230}``,
with durations in milliseconds.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
import sys
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from ..errors import FleetConfigError
from ..registry import Registry, ServerDescriptor, check_params, load_registry
from . import protocol as P

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatencyProfile:
    """Fixed delay in seconds per ``(server_id, tool)``; unlisted tools get ``default``.

    ``tools/list`` is only delayed when a profile names it explicitly.
    """

    delays: Mapping[tuple[str, str], float] = field(default_factory=dict)
    default: float = 0.0

    def __post_init__(self):
        if self.default < 0 or any(v < 0 for v in self.delays.values()):
            raise FleetConfigError("latencies must be >= 0")

    def delay(self, server_id: str, tool: str) -> float:
        return self.delays.get((server_id, tool), self.default)

    @classmethod
    def from_ms(cls, data: Mapping[str, Any], default_ms: float = 0.0) -> "LatencyProfile":
        delays: dict[tuple[str, str], float] = {}
        for key, val in data.items():
            if key == "*":
                default_ms = float(val)
            elif isinstance(val, Mapping):
                for tool, ms in val.items():
                    delays[(key, tool)] = float(ms) / 1000
            else:
                server, sep, tool = key.rpartition(".")
                if not sep:
                    raise FleetConfigError(f"latency key {key!r} is not 'server.tool'")
                delays[(server, tool)] = float(val) / 1000
        return cls(delays, default_ms / 1000)

    @classmethod
    def from_file(cls, path: str | Path) -> "LatencyProfile":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise FleetConfigError(f"cannot read latency profile {path}: {exc}") from None
        if not isinstance(data, dict):
            raise FleetConfigError(f"latency profile {path} must be a JSON object")
        return cls.from_ms(data)

    def to_ms(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for (s, t), v in sorted(self.delays.items()):
            out.setdefault(s, {})[t] = v * 1000
        return out


Behavior = Mapping[str, Mapping[str, Any]]


class Fleet:
    """In-process set of mock servers answering protocol envelopes.

    ``handle`` is a coroutine; concurrent calls are delayed independently.
    """

    def __init__(self, registry: Registry, behaviors: Mapping[str, Behavior] | None = None,
                 latency: LatencyProfile | None = None):
        self.registry = registry
        self.behaviors = {k: dict(v) for k, v in (behaviors or {}).items()}
        self.latency = latency or LatencyProfile()
        unknown = set(self.behaviors) - set(registry)
        if unknown:
            raise FleetConfigError(f"behaviour tables for unknown servers: {sorted(unknown)}")
        for sid, table in self.behaviors.items():
            for tool in table:
                if registry[sid].tool(tool) is None:
                    raise FleetConfigError(f"behaviour for unknown tool {sid}.{tool}")

    def with_latency(self, latency: LatencyProfile) -> "Fleet":
        return Fleet(self.registry, self.behaviors, latency)

    def lookup(self, server_id: str, tool: str, params: Mapping[str, Any]) -> dict[str, Any] | str | None:
        table = self.behaviors.get(server_id, {}).get(tool, {})
        key = P.canonical_params(dict(params))
        if key in table:
            return table[key]
        return table.get("*")

    async def handle(self, req: Any) -> dict[str, Any]:
        bad = P.check_request(req)
        if bad is not None:
            return bad
        rid = req["request_id"]
        sid = req["server_id"]
        if sid not in self.registry:
            return P.error(rid, P.UNKNOWN_SERVER, f"no server {sid!r}")
        desc: ServerDescriptor = self.registry[sid]
        if req["method"] == P.LIST:
            delay = self.latency.delays.get((sid, P.LIST), 0.0)
            if delay:
                await asyncio.sleep(delay)
            return P.ok(rid, [t.to_dict() for t in desc.tools])
        tool = desc.tool(req["tool"])
        if tool is None:
            return P.error(rid, P.UNKNOWN_TOOL, f"server {sid!r} has no tool {req['tool']!r}")
        params = req.get("params") or {}
        issues = check_params(tool, params)
        if issues:
            return P.error(rid, P.INVALID_PARAMS, "; ".join(i.detail for i in issues))
        delay = self.latency.delay(sid, tool.name)
        if delay:
            await asyncio.sleep(delay)
        entry = self.lookup(sid, tool.name, params)
        if entry is None:
            return P.error(rid, P.NO_RESULT, f"no result for {tool.name} {P.canonical_params(params)}")
        if isinstance(entry, Mapping) and "error" in entry:
            err = entry["error"]
            return P.error(rid, str(err.get("code", "tool_error")), str(err.get("message", "")))
        return P.ok(rid, entry if isinstance(entry, str) else json.dumps(entry, ensure_ascii=False))


def load_fleet(path: str | Path, latency: str | Path | LatencyProfile | None = None) -> Fleet:
    root = Path(path)
    if not root.is_dir():
        raise FleetConfigError(f"fleet directory not found: {root}")
    registry = load_registry(root)
    behaviors: dict[str, Behavior] = {}
    for sid in registry:
        bfile = root / sid / "behavior.json"
        if bfile.exists():
            try:
                behaviors[sid] = json.loads(bfile.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise FleetConfigError(f"{bfile}: {exc}") from None
    if latency is not None and not isinstance(latency, LatencyProfile):
        latency = LatencyProfile.from_file(latency)
    return Fleet(registry, behaviors, latency)


def write_fleet(fleet: Fleet, path: str | Path) -> None:
    import yaml

    root = Path(path)
    for desc in fleet.registry.descriptors:
        d = root / desc.server_id
        d.mkdir(parents=True, exist_ok=True)
        (d / "server.yaml").write_text(
            yaml.safe_dump(desc.to_dict(), sort_keys=False, allow_unicode=True), encoding="utf-8")
        if desc.server_id in fleet.behaviors:
            (d / "behavior.json").write_text(
                json.dumps(fleet.behaviors[desc.server_id], indent=2, ensure_ascii=False,
                           sort_keys=True), encoding="utf-8")


# --------------------------------------------------------------------------- clients


class ToolClient(Protocol):
    async def call(self, request: dict[str, Any]) -> dict[str, Any]: ...


class LocalClient:
    """Hermetic transport: envelopes are JSON round-tripped but never touch a socket."""

    def __init__(self, fleet: Fleet, timeout: float | None = None):
        self.fleet = fleet
        self.timeout = timeout
        self._ids = itertools.count(1)

    def next_id(self) -> str:
        return f"r{next(self._ids)}"

    async def call(self, request: dict[str, Any]) -> dict[str, Any]:
        wire = json.loads(json.dumps(request))
        rid = wire.get("request_id") if isinstance(wire, dict) else None
        try:
            resp = await asyncio.wait_for(self.fleet.handle(wire), self.timeout)
        except asyncio.TimeoutError:
            return P.error(rid, P.TRANSPORT_TIMEOUT, f"no response within {self.timeout}s")
        return json.loads(json.dumps(resp))


class SocketClient:
    """Line-delimited JSON over TCP with request_id multiplexing."""

    def __init__(self, host: str, port: int, timeout: float | None = 30.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._ids = itertools.count(1)
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None
        self._pending: dict[Any, asyncio.Future] = {}
        self._pump: asyncio.Task | None = None
        self._lock = asyncio.Lock()

    def next_id(self) -> str:
        return f"r{next(self._ids)}"

    async def connect(self) -> "SocketClient":
        self._reader, self._writer = await asyncio.open_connection(self.host, self.port)
        self._pump = asyncio.create_task(self._read_loop())
        return self

    async def _read_loop(self) -> None:
        assert self._reader is not None
        while True:
            line = await self._reader.readline()
            if not line:
                break
            try:
                resp = json.loads(line)
            except json.JSONDecodeError:
                logger.warning("dropping undecodable response line")
                continue
            fut = self._pending.pop(resp.get("request_id"), None)
            if fut is not None and not fut.done():
                fut.set_result(resp)
        for rid, fut in list(self._pending.items()):
            if not fut.done():
                fut.set_result(P.error(rid, P.TRANSPORT_ERROR, "connection closed"))
        self._pending.clear()

    async def call(self, request: dict[str, Any]) -> dict[str, Any]:
        if self._writer is None:
            await self.connect()
        assert self._writer is not None
        rid = request.get("request_id")
        fut = asyncio.get_running_loop().create_future()
        self._pending[rid] = fut
        async with self._lock:
            self._writer.write(P.encode(request))
            await self._writer.drain()
        try:
            return await asyncio.wait_for(fut, self.timeout)
        except asyncio.TimeoutError:
            self._pending.pop(rid, None)
            return P.error(rid, P.TRANSPORT_TIMEOUT, f"no response within {self.timeout}s")

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except ConnectionError:
                pass
        if self._pump is not None:
            self._pump.cancel()
            try:
                await self._pump
            except (asyncio.CancelledError, Exception):
                pass


async def mcp_call(client: ToolClient, request: dict[str, Any]) -> dict[str, Any]:
    return await client.call(request)


# --------------------------------------------------------------------------- servers


async def _serve_lines(fleet: Fleet, reader: asyncio.StreamReader, write) -> None:
    lock = asyncio.Lock()
    inflight: set[asyncio.Task] = set()

    async def answer(line: bytes) -> None:
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            resp = P.error(None, P.BAD_REQUEST, "invalid JSON")
        else:
            resp = await fleet.handle(req)
        async with lock:
            await write(P.encode(resp))

    while True:
        line = await reader.readline()
        if not line:
            break
        if not line.strip():
            continue
        task = asyncio.create_task(answer(line))
        inflight.add(task)
        task.add_done_callback(inflight.discard)
    if inflight:
        await asyncio.gather(*inflight)


class SocketFleetServer:
    """Serve a fleet on ``host:port``; port 0 picks a free port."""

    def __init__(self, fleet: Fleet, host: str = "127.0.0.1", port: int = 0):
        self.fleet = fleet
        self.host = host
        self.port = port
        self._server: asyncio.AbstractServer | None = None

    async def start(self) -> "SocketFleetServer":
        async def on_conn(reader, writer):
            async def write(data: bytes) -> None:
                writer.write(data)
                await writer.drain()
            try:
                await _serve_lines(self.fleet, reader, write)
            finally:
                writer.close()

        try:
            self._server = await asyncio.start_server(on_conn, self.host, self.port)
        except OSError as exc:
            raise FleetConfigError(f"cannot bind {self.host}:{self.port}: {exc}") from None
        self.port = self._server.sockets[0].getsockname()[1]
        return self

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        assert self._server is not None
        async with self._server:
            await self._server.serve_forever()


async def serve_stdio(fleet: Fleet) -> None:
    """Local-process transport: requests on stdin, responses on stdout."""
    loop = asyncio.get_running_loop()
    reader = asyncio.StreamReader()
    await loop.connect_read_pipe(lambda: asyncio.StreamReaderProtocol(reader), sys.stdin)

    async def write(data: bytes) -> None:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()

    await _serve_lines(fleet, reader, write)


def parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise FleetConfigError(f"bad socket address {addr!r}; expected host:port") from None
