"""Chat-completion backends: deterministic scripted rules or a live HTTP
endpoint, plus context-window accounting and chunked summarization of
oversized text."""

from __future__ import annotations

import json
import math
import re
import threading
from dataclasses import dataclass, field
from typing import Optional, Protocol

__all__ = [
    "ChatRequest",
    "ScriptedRule",
    "ScriptedBackend",
    "HTTPBackend",
    "Backend",
    "BackendUnavailable",
    "ContextOverflow",
    "NoScriptMatch",
    "complete",
    "estimate_tokens",
    "chunked_summarize",
    "DEFAULT_CHUNK_CHARS",
    "DEFAULT_MEMORY_CAP_CHARS",
]

DEFAULT_TEMPERATURE = 0.5
DEFAULT_MAX_CONTEXT_TOKENS = 16384
DEFAULT_CHUNK_CHARS = 4096
DEFAULT_MEMORY_CAP_CHARS = 2048
PARTIAL_MARKER = "[partial]"


class BackendUnavailable(Exception):
    """The backend could not produce a reply (network/HTTP failure)."""


class ContextOverflow(Exception):
    """Request exceeds the configured context window; caller must chunk."""


class NoScriptMatch(Exception):
    """No scripted rule matched the prompt (or all matches were consumed)."""


@dataclass
class ChatRequest:
    messages: list[tuple[str, str]]  # (role, content)
    temperature: float = DEFAULT_TEMPERATURE
    max_context_tokens: int = DEFAULT_MAX_CONTEXT_TOKENS

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0][0] != "system":
            raise ValueError("first message must have role 'system'")
        for role, _ in self.messages:
            if role not in ("system", "user", "assistant"):
                raise ValueError(f"unknown role: {role!r}")

    def prompt_text(self) -> str:
        return "\n".join(content for _, content in self.messages)


class Backend(Protocol):
    def reply(self, request: ChatRequest) -> str: ...


@dataclass
class ScriptedRule:
    match: str
    reply: str
    once: bool = False
    consumed: bool = False

    def __post_init__(self) -> None:
        self._pattern = re.compile(self.match, re.DOTALL)


class ScriptedBackend:
    """Deterministic backend: first matching unconsumed rule wins."""

    def __init__(self, rules: list[ScriptedRule]) -> None:
        self._rules = list(rules)
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path: str) -> "ScriptedBackend":
        rules = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                rules.append(ScriptedRule(
                    match=obj["match"],
                    reply=obj["reply"],
                    once=bool(obj.get("once", False)),
                ))
        return cls(rules)

    def reply(self, request: ChatRequest) -> str:
        text = request.prompt_text()
        with self._lock:
            for rule in self._rules:
                if rule.consumed:
                    continue
                if rule._pattern.search(text):
                    if rule.once:
                        rule.consumed = True
                    return rule.reply
        raise NoScriptMatch(f"no scripted rule matches prompt ({len(text)} chars)")


class HTTPBackend:
    """Live chat-completion endpoint speaking the de-facto wire shape."""

    def __init__(self, endpoint: str, model: str, timeout_s: float = 120.0) -> None:
        self.endpoint = endpoint
        self.model = model
        self.timeout_s = timeout_s

    def reply(self, request: ChatRequest) -> str:
        import requests

        body = {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
        }
        try:
            resp = requests.post(self.endpoint, json=body, timeout=self.timeout_s)
            resp.raise_for_status()
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except Exception as exc:  # noqa: BLE001 - any transport failure
            raise BackendUnavailable(str(exc)) from exc


def estimate_tokens(text: str) -> int:
    """Cheap backend-agnostic token estimate: ceil(utf-8 bytes / 4)."""
    return math.ceil(len(text.encode("utf-8")) / 4)


def complete(backend: Backend, request: ChatRequest) -> str:
    """Send one chat request; guard the context window first."""
    total = estimate_tokens(request.prompt_text())
    if total > request.max_context_tokens:
        raise ContextOverflow(
            f"estimated {total} tokens exceeds window of {request.max_context_tokens}"
        )
    return backend.reply(request)


def chunked_summarize(
    backend: Backend,
    long_text: str,
    instruction: str,
    chunk_chars: int = DEFAULT_CHUNK_CHARS,
    memory_cap_chars: int = DEFAULT_MEMORY_CAP_CHARS,
) -> str:
    """Linear pass over ``long_text`` in fixed chunks, maintaining a
    fixed-length memory that the backend updates per chunk.

    Issues exactly ceil(len/chunk_chars) backend calls; the result never
    exceeds ``memory_cap_chars``.  If the backend fails mid-stream the last
    good memory is returned flagged as partial.
    """
    if chunk_chars < 256:
        raise ValueError("chunk_chars must be >= 256")
    if memory_cap_chars < 256:
        raise ValueError("memory_cap_chars must be >= 256")

    memory = ""
    for start in range(0, max(len(long_text), 1), chunk_chars):
        chunk = long_text[start:start + chunk_chars]
        request = ChatRequest(messages=[
            ("system", instruction),
            ("user", f"Current memory:\n{memory}\n\nNext chunk:\n{chunk}\n\n"
                     "Reply with the updated memory only."),
        ])
        try:
            memory = complete(backend, request)[:memory_cap_chars]
        except BackendUnavailable:
            if not memory:
                raise  # nothing summarized yet: let the caller pick a fallback
            tag = f"\n{PARTIAL_MARKER}"
            return (memory[: memory_cap_chars - len(tag)] + tag)[:memory_cap_chars]
    return memory
