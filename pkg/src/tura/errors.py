"""Exception hierarchy shared across the package."""

from __future__ import annotations


class TuraError(Exception):
    """Base class for all errors raised by this package."""


class RegistryError(TuraError):
    pass


class DescriptorParseError(RegistryError):
    """The descriptor source could not be parsed.

    ``line`` is 1-based when known; ``field`` is a dotted path into the
    offending document.
    """

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class DuplicateServerError(RegistryError):
    def __init__(self, server_id: str, first: str, second: str):
        self.server_id = server_id
        self.first = first
        self.second = second
        super().__init__(f"duplicate server_id {server_id!r}: defined by {first} and {second}")


class SchemaViolationError(RegistryError):
    def __init__(self, message: str, *, server_id: str | None = None,
                 tool: str | None = None, field: str | None = None):
        self.server_id = server_id
        self.tool = tool
        self.field = field
        parts = [p for p in (
            f"server {server_id!r}" if server_id else None,
            f"tool {tool!r}" if tool else None,
            f"field {field!r}" if field else None,
        ) if p]
        super().__init__(f"{message} [{', '.join(parts)}]" if parts else message)


class ServerNotFoundError(RegistryError, KeyError):
    def __init__(self, server_id: str):
        self.server_id = server_id
        super().__init__(server_id)

    def __str__(self) -> str:
        return f"unknown server_id {self.server_id!r}"


class AugmentationError(TuraError):
    pass


class FormatError(TuraError):
    """Provider output could not be interpreted in the expected shape."""


class ProviderError(TuraError):
    """A generation or embedding provider failed to produce output."""


class EmbeddingError(TuraError):
    pass


class DimensionMismatchError(EmbeddingError):
    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"dimension mismatch: expected {expected}, got {got}")


class IndexBuildError(EmbeddingError):
    def __init__(self, message: str, *, server_id: str, segment: int | None = None):
        self.server_id = server_id
        self.segment = segment
        loc = f"server {server_id!r}" + (f", segment {segment}" if segment is not None else "")
        super().__init__(f"{message} ({loc})")


class ConfigError(TuraError):
    pass


class RoutingError(TuraError):
    pass


class PlanValidationError(TuraError):
    pass


class ScheduleError(TuraError):
    pass


class MakespanError(TuraError):
    pass


class FleetConfigError(TuraError):
    pass


class BenchmarkError(TuraError):
    pass
