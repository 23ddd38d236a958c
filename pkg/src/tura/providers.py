"""Text-generation providers.

Everything that talks to an LLM goes through :class:`TextGenerator`. The
offline stand-ins are :class:`ReplayProvider` (canned responses matched on
prompt substrings) and :class:`CallableProvider` (wraps a function). A remote
OpenAI-compatible chat endpoint is used when ``TURA_LLM_ENDPOINT`` is set.
"""

from __future__ import annotations

import inspect
import json
import os
import threading
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, runtime_checkable

import httpx

from .errors import ConfigError, ProviderError

ENV_LLM_ENDPOINT = "TURA_LLM_ENDPOINT"
ENV_LLM_API_KEY = "TURA_LLM_API_KEY"
ENV_LLM_MODEL = "TURA_LLM_MODEL"


@runtime_checkable
class TextGenerator(Protocol):
    def generate(self, prompt: str, *, temperature: float | None = None) -> str: ...


async def agenerate(gen: TextGenerator, prompt: str, *, temperature: float | None = None) -> str:
    """Await ``gen`` if it has a native coroutine API, else call it inline.

    Offline providers return instantly, so calling them on the event loop keeps
    scheduling deterministic; remote providers implement ``agenerate``.
    """
    native = getattr(gen, "agenerate", None)
    if native is not None and inspect.iscoroutinefunction(native):
        return await native(prompt, temperature=temperature)
    return gen.generate(prompt, temperature=temperature)


@dataclass
class ReplayRule:
    match: tuple[str, ...]
    responses: tuple[str, ...]


def _as_text(resp: Any) -> str:
    return resp if isinstance(resp, str) else json.dumps(resp, ensure_ascii=False)


class ReplayProvider:
    """Return canned responses for prompts containing given substrings.

    Rules are checked in order; the first rule whose every ``match`` substring
    occurs in the prompt wins. A rule with several ``responses`` hands them out
    in order on successive hits and then repeats the last one. A prompt that no
    rule matches raises :class:`ProviderError`.

    File format (JSON)::

        {"rules": [{"match": ["Current step: 1", "weather"], "response": {...}},
                   {"match": "hotel", "responses": ["...", "..."]}]}

    A plain ``{"<substring>": <response>, ...}`` object is accepted as well.
    """

    def __init__(self, rules: Iterable[ReplayRule | Mapping[str, Any]] = ()):
        self.rules: list[ReplayRule] = [self._coerce(r) for r in rules]
        self._hits: dict[int, int] = {}
        self._lock = threading.Lock()
        self.calls: list[str] = []

    @staticmethod
    def _coerce(rule: ReplayRule | Mapping[str, Any]) -> ReplayRule:
        if isinstance(rule, ReplayRule):
            return rule
        match = rule.get("match", ())
        if isinstance(match, str):
            match = (match,)
        if "responses" in rule:
            responses = tuple(_as_text(r) for r in rule["responses"])
        else:
            responses = (_as_text(rule["response"]),)
        if not responses:
            raise ConfigError("replay rule needs at least one response")
        return ReplayRule(tuple(match), responses)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any] | list) -> "ReplayProvider":
        if isinstance(data, list):
            return cls(data)
        if "rules" in data:
            return cls(data["rules"])
        return cls({"match": (k,), "response": v} for k, v in data.items())

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayProvider":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read replay file {path}: {exc}") from None
        return cls.from_mapping(data)

    def add(self, match: str | Iterable[str], response: Any) -> None:
        self.rules.append(self._coerce({"match": match, "response": response}))

    def generate(self, prompt: str, *, temperature: float | None = None) -> str:
        with self._lock:
            self.calls.append(prompt)
            for i, rule in enumerate(self.rules):
                if all(m in prompt for m in rule.match):
                    n = self._hits.get(i, 0)
                    self._hits[i] = n + 1
                    return rule.responses[min(n, len(rule.responses) - 1)]
        raise ProviderError("no replay rule matches prompt: " + prompt[:120].replace("\n", " "))


class CallableProvider:
    """Adapt a plain ``fn(prompt) -> str`` (or ``fn(prompt, temperature)``) to a provider."""

    def __init__(self, fn: Callable[..., str]):
        self.fn = fn
        try:
            self._takes_temp = len(inspect.signature(fn).parameters) >= 2
        except (TypeError, ValueError):
            self._takes_temp = False

    def generate(self, prompt: str, *, temperature: float | None = None) -> str:
        try:
            out = self.fn(prompt, temperature) if self._takes_temp else self.fn(prompt)
        except ProviderError:
            raise
        except Exception as exc:  # provider code is user-supplied
            raise ProviderError(str(exc)) from exc
        return out


@dataclass
class HttpTextGenerator:
    """OpenAI-compatible ``/chat/completions`` client."""

    endpoint: str
    api_key: str | None = None
    model: str = "default"
    timeout: float = 60.0
    default_temperature: float = 0.2
    headers: dict[str, str] = field(default_factory=dict)

    def _payload(self, prompt: str, temperature: float | None) -> dict[str, Any]:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.default_temperature if temperature is None else temperature,
        }

    def _headers(self) -> dict[str, str]:
        h = {"Content-Type": "application/json", **self.headers}
        if self.api_key:
            h["Authorization"] = f"Bearer {self.api_key}"
        return h

    @staticmethod
    def _content(resp: httpx.Response) -> str:
        try:
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"bad LLM response: {exc}") from None

    def generate(self, prompt: str, *, temperature: float | None = None) -> str:
        try:
            resp = httpx.post(self.endpoint, json=self._payload(prompt, temperature),
                              headers=self._headers(), timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise ProviderError(f"LLM endpoint unreachable: {exc}") from None
        return self._content(resp)

    async def agenerate(self, prompt: str, *, temperature: float | None = None) -> str:
        try:
            async with httpx.AsyncClient(timeout=self.timeout) as client:
                resp = await client.post(self.endpoint, json=self._payload(prompt, temperature),
                                         headers=self._headers())
        except httpx.HTTPError as exc:
            raise ProviderError(f"LLM endpoint unreachable: {exc}") from None
        return self._content(resp)


def default_text_generator(replay: str | Path | None = None) -> TextGenerator:
    """Remote provider if ``TURA_LLM_ENDPOINT`` is set, else a replay file."""
    endpoint = os.environ.get(ENV_LLM_ENDPOINT)
    if endpoint:
        return HttpTextGenerator(endpoint, api_key=os.environ.get(ENV_LLM_API_KEY),
                                 model=os.environ.get(ENV_LLM_MODEL, "default"))
    if replay is None:
        raise ConfigError(f"set {ENV_LLM_ENDPOINT} or supply a replay file for offline runs")
    return ReplayProvider.from_file(replay)
