from .fleet import (
    Fleet,
    LatencyProfile,
    LocalClient,
    SocketClient,
    SocketFleetServer,
    ToolClient,
    load_fleet,
    mcp_call,
    serve_stdio,
    write_fleet,
)
from .protocol import canonical_params

__all__ = [
    "Fleet",
    "LatencyProfile",
    "LocalClient",
    "SocketClient",
    "SocketFleetServer",
    "ToolClient",
    "canonical_params",
    "load_fleet",
    "mcp_call",
    "serve_stdio",
    "write_fleet",
]
