"""Tool-server descriptors, validation, and synthetic-query augmentation.

Descriptor files are YAML (JSON is accepted too, being a YAML subset). A
file holds one document per server, separated by ``---``; a top-level list
of servers is also accepted. A directory source loads every
``*/server.yaml`` below it plus any top-level ``*.yaml``/``*.yml``/``*.json``
file, in sorted path order.

Example::

    server_id: weather
    description: Forecasts for a city and date.
    tools:
      - name: get_weather
        description: Daily forecast.
        parameters:
          - {name: city, type: string, required: true}
          - {name: date, type: string, required: true, pattern: '\\d{4}-\\d{2}-\\d{2}'}
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, replace
from pathlib import Path
from types import MappingProxyType
from typing import Any

import yaml

from . import prompts
from .errors import (
    AugmentationError,
    DescriptorParseError,
    DuplicateServerError,
    FormatError,
    ProviderError,
    SchemaViolationError,
    ServerNotFoundError,
)
from .providers import TextGenerator

logger = logging.getLogger(__name__)

PARAM_TYPES = ("string", "integer", "number", "boolean", "enum")
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")

DEFAULT_N_Q = 20
DEFAULT_TEMPERATURE = 1.2


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    required: bool = False
    description: str = ""
    values: tuple[str, ...] = ()
    pattern: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "type": self.type,
                             "required": self.required, "description": self.description}
        if self.type == "enum":
            d["values"] = list(self.values)
        if self.pattern is not None:
            d["pattern"] = self.pattern
        return d


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    parameters: tuple[ParamSpec, ...] = ()

    def param(self, name: str) -> ParamSpec | None:
        for p in self.parameters:
            if p.name == name:
                return p
        return None

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "description": self.description,
                "parameters": [p.to_dict() for p in self.parameters]}


@dataclass(frozen=True)
class ServerDescriptor:
    server_id: str
    description: str
    tools: tuple[ToolSchema, ...]
    synthetic_queries: tuple[str, ...] = ()

    def tool(self, name: str) -> ToolSchema | None:
        for t in self.tools:
            if t.name == name:
                return t
        return None

    @property
    def tool_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tools)

    def to_dict(self) -> dict[str, Any]:
        return {
            "server_id": self.server_id,
            "description": self.description,
            "tools": [t.to_dict() for t in self.tools],
            "synthetic_queries": list(self.synthetic_queries),
        }


@dataclass(frozen=True)
class Segment:
    role: str  # "doc" | "synthetic_query"
    text: str


@dataclass(frozen=True)
class AugmentedDocument:
    server_id: str
    segments: tuple[Segment, ...]

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.segments]


@dataclass(frozen=True)
class ParamIssue:
    param: str
    code: str  # missing_required | unexpected | wrong_type | bad_enum | pattern_mismatch
    detail: str


def check_params(tool: ToolSchema, params: Mapping[str, Any]) -> list[ParamIssue]:
    """Return every way ``params`` fails ``tool``'s schema (empty if valid)."""
    if not isinstance(params, Mapping):
        return [ParamIssue("", "wrong_type", "params must be an object")]
    issues: list[ParamIssue] = []
    for spec in tool.parameters:
        if spec.name not in params:
            if spec.required:
                issues.append(ParamIssue(spec.name, "missing_required",
                                         f"missing required parameter {spec.name!r}"))
            continue
        issue = _check_value(spec, params[spec.name])
        if issue is not None:
            issues.append(issue)
    known = {p.name for p in tool.parameters}
    for name in params:
        if name not in known:
            issues.append(ParamIssue(str(name), "unexpected", f"unexpected parameter {name!r}"))
    return issues


def _check_value(spec: ParamSpec, value: Any) -> ParamIssue | None:
    t = spec.type
    if t == "string":
        if not isinstance(value, str):
            return ParamIssue(spec.name, "wrong_type", f"{spec.name!r} must be a string")
        if spec.pattern is not None and re.fullmatch(spec.pattern, value) is None:
            return ParamIssue(spec.name, "pattern_mismatch",
                              f"{spec.name!r}={value!r} does not match {spec.pattern!r}")
    elif t == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            return ParamIssue(spec.name, "wrong_type", f"{spec.name!r} must be an integer")
    elif t == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            return ParamIssue(spec.name, "wrong_type", f"{spec.name!r} must be a finite number")
    elif t == "boolean":
        if not isinstance(value, bool):
            return ParamIssue(spec.name, "wrong_type", f"{spec.name!r} must be a boolean")
    elif t == "enum":
        if not isinstance(value, str) or value not in spec.values:
            return ParamIssue(spec.name, "bad_enum",
                              f"{spec.name!r}={value!r} not in {list(spec.values)}")
    return None


# --------------------------------------------------------------------------- parsing


def _require(doc: Mapping, key: str, where: str, line: int | None, kind=str):
    if key not in doc:
        raise DescriptorParseError(f"missing field in {where}", line=line, field=key)
    val = doc[key]
    if kind is str and not isinstance(val, str):
        raise DescriptorParseError(f"field must be a string in {where}", line=line, field=key)
    if kind is list and not isinstance(val, list):
        raise DescriptorParseError(f"field must be a list in {where}", line=line, field=key)
    return val


def _parse_param(raw: Any, server_id: str, tool: str, idx: int, line: int | None) -> ParamSpec:
    fld = f"tools.{tool}.parameters[{idx}]"
    if not isinstance(raw, Mapping):
        raise DescriptorParseError("parameter must be a mapping", line=line, field=fld)
    name = raw.get("name")
    if not isinstance(name, str) or not _IDENT.match(name):
        raise SchemaViolationError("invalid parameter name", server_id=server_id, tool=tool,
                                   field=f"{fld}.name")
    ptype = raw.get("type", "string")
    values: tuple[str, ...] = ()
    if isinstance(ptype, str) and ptype.startswith("enum(") and ptype.endswith(")"):
        inner = ptype[5:-1].strip()
        values = tuple(v.strip() for v in inner.split(",") if v.strip())
        ptype = "enum"
    if ptype not in PARAM_TYPES:
        raise SchemaViolationError(f"unknown parameter type {ptype!r}", server_id=server_id,
                                   tool=tool, field=f"{name}.type")
    if ptype == "enum":
        raw_values = raw.get("values", values)
        if not isinstance(raw_values, (list, tuple)):
            raise SchemaViolationError("enum values must be a list", server_id=server_id,
                                       tool=tool, field=f"{name}.values")
        values = tuple(str(v) for v in raw_values)
        if not values:
            raise SchemaViolationError("enum has no values", server_id=server_id, tool=tool,
                                       field=f"{name}.values")
    pattern = raw.get("pattern")
    if pattern is not None:
        try:
            re.compile(pattern)
        except re.error as exc:
            raise SchemaViolationError(f"bad pattern: {exc}", server_id=server_id, tool=tool,
                                       field=f"{name}.pattern") from None
    return ParamSpec(
        name=name,
        type=ptype,
        required=bool(raw.get("required", False)),
        description=str(raw.get("description", "")),
        values=values,
        pattern=pattern,
    )


def parse_tool(raw: Any, server_id: str, idx: int, line: int | None) -> ToolSchema:
    if not isinstance(raw, Mapping):
        raise DescriptorParseError("tool must be a mapping", line=line, field=f"tools[{idx}]")
    name = raw.get("name")
    if not isinstance(name, str) or not _IDENT.match(name):
        raise SchemaViolationError("invalid tool name", server_id=server_id,
                                   tool=str(name), field="name")
    params_raw = raw.get("parameters", [])
    if not isinstance(params_raw, list):
        raise SchemaViolationError("parameters must be a list", server_id=server_id,
                                   tool=name, field="parameters")
    params = tuple(_parse_param(p, server_id, name, i, line) for i, p in enumerate(params_raw))
    seen: set[str] = set()
    for p in params:
        if p.name in seen:
            raise SchemaViolationError("duplicate parameter name", server_id=server_id,
                                       tool=name, field=p.name)
        seen.add(p.name)
    return ToolSchema(name=name, description=str(raw.get("description", "")), parameters=params)


def parse_descriptor(raw: Any, *, line: int | None = None) -> ServerDescriptor:
    """Validate one raw mapping and build a :class:`ServerDescriptor`."""
    if not isinstance(raw, Mapping):
        raise DescriptorParseError("server document must be a mapping", line=line)
    server_id = _require(raw, "server_id", "server", line)
    if not _IDENT.match(server_id):
        raise SchemaViolationError("invalid server_id", server_id=server_id, field="server_id")
    description = _require(raw, "description", f"server {server_id!r}", line)
    if not description.strip():
        raise SchemaViolationError("description is empty", server_id=server_id,
                                   field="description")
    tools_raw = _require(raw, "tools", f"server {server_id!r}", line, kind=list)
    if not tools_raw:
        raise SchemaViolationError("server declares no tools", server_id=server_id,
                                   field="tools")
    tools = tuple(parse_tool(t, server_id, i, line) for i, t in enumerate(tools_raw))
    names: set[str] = set()
    for t in tools:
        if t.name in names:
            raise SchemaViolationError("duplicate tool name", server_id=server_id,
                                       tool=t.name, field="name")
        names.add(t.name)
    sq = raw.get("synthetic_queries") or []
    if not isinstance(sq, list) or not all(isinstance(s, str) for s in sq):
        raise DescriptorParseError("synthetic_queries must be a list of strings",
                                   line=line, field="synthetic_queries")
    return ServerDescriptor(server_id=server_id, description=description, tools=tools,
                            synthetic_queries=_dedupe(sq, description))


def _iter_yaml_documents(text: str, origin: str) -> Iterator[tuple[Any, int]]:
    """Yield ``(document, 1-based start line)`` for each server in ``text``."""
    try:
        nodes = list(yaml.compose_all(text, Loader=yaml.SafeLoader))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise DescriptorParseError(f"{origin}: {getattr(exc, 'problem', None) or exc}",
                                   line=mark.line + 1 if mark else None) from None
    for node in nodes:
        if node is None:
            continue
        data = _construct(node)
        if isinstance(node, yaml.SequenceNode):
            for child, item in zip(node.value, data):
                yield item, child.start_mark.line + 1
        else:
            yield data, node.start_mark.line + 1


def _construct(node: yaml.Node) -> Any:
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_document(node)
    finally:
        loader.dispose()


class Registry(Mapping[str, ServerDescriptor]):
    """Immutable, ordered collection of validated server descriptors (the pool M).

    Lookups by unknown id raise :class:`ServerNotFoundError`. Use
    :meth:`with_descriptor` to obtain an updated copy after augmentation.
    """

    def __init__(self, descriptors: Iterable[ServerDescriptor], origins: Mapping[str, str] | None = None):
        items: dict[str, ServerDescriptor] = {}
        src: dict[str, str] = {}
        for i, d in enumerate(descriptors):
            where = (origins or {}).get(d.server_id, f"entry {i}")
            if d.server_id in items:
                raise DuplicateServerError(d.server_id, src[d.server_id], where)
            items[d.server_id] = d
            src[d.server_id] = where
        self._items = MappingProxyType(items)

    def __getitem__(self, server_id: str) -> ServerDescriptor:
        try:
            return self._items[server_id]
        except KeyError:
            raise ServerNotFoundError(server_id) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __repr__(self) -> str:
        return f"Registry({list(self._items)})"

    @property
    def descriptors(self) -> list[ServerDescriptor]:
        return list(self._items.values())

    def with_descriptor(self, desc: ServerDescriptor) -> "Registry":
        if desc.server_id not in self._items:
            raise ServerNotFoundError(desc.server_id)
        return Registry([desc if d.server_id == desc.server_id else d for d in self._items.values()])

    def to_yaml(self) -> str:
        return yaml.safe_dump_all([d.to_dict() for d in self._items.values()],
                                  sort_keys=False, allow_unicode=True)


def _descriptor_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    files = sorted(path.glob("*/server.yaml"))
    files += sorted(p for p in path.iterdir()
                    if p.is_file() and p.suffix in (".yaml", ".yml", ".json"))
    return files


def load_registry(source: str | Path | Iterable[Mapping[str, Any] | ServerDescriptor]) -> Registry:
    """Load and validate descriptors from a file, directory, or inline collection."""
    descriptors: list[ServerDescriptor] = []
    origins: dict[str, str] = {}

    def add(desc: ServerDescriptor, where: str) -> None:
        if desc.server_id in origins:
            raise DuplicateServerError(desc.server_id, origins[desc.server_id], where)
        origins[desc.server_id] = where
        descriptors.append(desc)

    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise DescriptorParseError(f"no such descriptor source: {path}")
        for f in _descriptor_files(path):
            text = f.read_text(encoding="utf-8")
            for raw, line in _iter_yaml_documents(text, str(f)):
                add(parse_descriptor(raw, line=line), f"{f}:{line}")
    else:
        for i, raw in enumerate(source):
            desc = raw if isinstance(raw, ServerDescriptor) else parse_descriptor(raw)
            add(desc, f"entry {i}")
    return Registry(descriptors, origins)


# --------------------------------------------------------------------------- augmentation


def _dedupe(items: Iterable[str], exclude: str | None = None) -> tuple[str, ...]:
    seen: set[str] = {exclude.strip()} if exclude else set()
    out: list[str] = []
    for s in items:
        s = s.strip()
        if s and s not in seen:
            seen.add(s)
            out.append(s)
    return tuple(out)


_QUOTED = re.compile(r'"((?:[^"\\]|\\.)*)"')


def parse_string_list(text: str) -> list[str]:
    """Parse provider output expected to be a JSON array of strings.

    Raises :class:`FormatError` when the output is not a clean array.
    """
    body = prompts.strip_code_fences(text)
    start, end = body.find("["), body.rfind("]")
    if start < 0 or end <= start:
        raise FormatError("no JSON array in output")
    try:
        data = json.loads(body[start:end + 1])
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON array: {exc}") from None
    if not isinstance(data, list) or not all(isinstance(s, str) for s in data):
        raise FormatError("output is not a list of strings")
    return data


def extract_quoted_strings(text: str) -> list[str]:
    out = []
    for m in _QUOTED.finditer(text):
        try:
            out.append(json.loads(f'"{m.group(1)}"'))
        except json.JSONDecodeError:
            out.append(m.group(1))
    return out


def augment_server(desc: ServerDescriptor, gen: TextGenerator, n_q: int = DEFAULT_N_Q,
                   temperature: float = DEFAULT_TEMPERATURE) -> ServerDescriptor:
    """Return a copy of ``desc`` with up to ``n_q`` generated synthetic queries.

    Malformed JSON triggers one re-prompt; if that is malformed too, quoted
    strings are salvaged from the second response.
    """
    if n_q < 0:
        raise ValueError("n_q must be >= 0")
    if n_q == 0:
        return replace(desc, synthetic_queries=())
    if temperature <= 1.0:
        logger.warning("augmenting %s at temperature %.2f; values > 1.0 give more diverse queries",
                       desc.server_id, temperature)
    prompt = prompts.tool_profile_prompt(desc, n_q)
    outputs: list[str] = []
    queries: list[str] | None = None
    for _attempt in range(2):
        try:
            out = gen.generate(prompt, temperature=temperature)
        except ProviderError as exc:
            outputs.append("")
            last_exc: Exception = exc
            continue
        outputs.append(out)
        try:
            queries = parse_string_list(out)
            break
        except FormatError as exc:
            last_exc = exc
    if queries is None:
        if not any(outputs):
            raise AugmentationError(f"provider failed for {desc.server_id}: {last_exc}")
        queries = extract_quoted_strings(outputs[-1] or outputs[0])
        if not queries:
            raise FormatError(f"could not extract any queries for {desc.server_id}")
    return replace(desc, synthetic_queries=_dedupe(queries, desc.description)[:n_q])


def build_augmented_document(desc: ServerDescriptor) -> AugmentedDocument:
    segments = [Segment("doc", desc.description)]
    segments += [Segment("synthetic_query", q) for q in desc.synthetic_queries]
    return AugmentedDocument(desc.server_id, tuple(segments))


def build_doc_only_document(desc: ServerDescriptor) -> AugmentedDocument:
    return AugmentedDocument(desc.server_id, (Segment("doc", desc.description),))
