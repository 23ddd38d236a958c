"""Request/response envelopes for the tool-server wire protocol.

Requests::

    {"method": "tools/list", "server_id": "weather", "request_id": "r1"}
    {"method": "tools/call", "server_id": "weather", "tool": "get_weather",
     "params": {"city": "Beijing"}, "request_id": "r2"}

Responses always echo ``request_id``::

    {"request_id": "r2", "ok": true, "result": "Sunny, 22-30°C"}
    {"request_id": "r2", "ok": false, "error": {"code": "unknown_tool", "message": "..."}}

On the socket and stdio transports each envelope is one line of JSON.
"""

from __future__ import annotations

import json
from typing import Any

LIST = "tools/list"
CALL = "tools/call"
METHODS = (LIST, CALL)

# error codes
BAD_REQUEST = "bad_request"
UNKNOWN_METHOD = "unknown_method"
UNKNOWN_SERVER = "unknown_server"
UNKNOWN_TOOL = "unknown_tool"
INVALID_PARAMS = "invalid_params"
NO_RESULT = "no_result"
TRANSPORT_TIMEOUT = "transport_timeout"
TRANSPORT_ERROR = "transport_error"


def canonical_params(params: dict[str, Any] | None) -> str:
    """Key used by behaviour tables: sorted-key compact JSON."""
    return json.dumps(params or {}, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def request(method: str, server_id: str, request_id: str, tool: str | None = None,
            params: dict[str, Any] | None = None) -> dict[str, Any]:
    req: dict[str, Any] = {"method": method, "server_id": server_id, "request_id": request_id}
    if tool is not None:
        req["tool"] = tool
    if params is not None:
        req["params"] = params
    return req


def ok(request_id: Any, result: Any) -> dict[str, Any]:
    return {"request_id": request_id, "ok": True, "result": result}


def error(request_id: Any, code: str, message: str) -> dict[str, Any]:
    return {"request_id": request_id, "ok": False, "error": {"code": code, "message": message}}


def check_request(req: Any) -> dict[str, Any] | None:
    """Return an error response for a structurally bad request, else ``None``."""
    if not isinstance(req, dict):
        return error(None, BAD_REQUEST, "request must be a JSON object")
    rid = req.get("request_id")
    if not isinstance(rid, (str, int)) or isinstance(rid, bool):
        return error(rid if isinstance(rid, (str, int)) else None, BAD_REQUEST,
                     "request_id must be a string or integer")
    method = req.get("method")
    if method not in METHODS:
        return error(rid, UNKNOWN_METHOD, f"unknown method {method!r}")
    if not isinstance(req.get("server_id"), str):
        return error(rid, BAD_REQUEST, "server_id must be a string")
    if method == CALL:
        if not isinstance(req.get("tool"), str):
            return error(rid, BAD_REQUEST, "tools/call needs a tool name")
        if "params" in req and not isinstance(req["params"], dict):
            return error(rid, INVALID_PARAMS, "params must be an object")
    return None


def encode(envelope: dict[str, Any]) -> bytes:
    return (json.dumps(envelope, ensure_ascii=False) + "\n").encode("utf-8")
