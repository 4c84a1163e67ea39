"""Engagement configuration: file loading, validation, defaults."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

__all__ = ["Config", "BackendConfig", "ConfigError"]

MODES = ("automatic", "semi_automatic", "manual")


class ConfigError(ValueError):
    """Configuration failed validation."""


@dataclass
class BackendConfig:
    kind: str = "scripted"  # "live" | "scripted"
    endpoint: str = ""
    model: str = ""
    timeout_ms: int = 120_000
    script_path: str = ""

    def validate(self) -> None:
        if self.kind not in ("live", "scripted"):
            raise ConfigError(f"backend.kind must be live or scripted, got {self.kind!r}")
        if self.kind == "live" and not self.endpoint:
            raise ConfigError("backend.endpoint required for live backend")
        if self.kind == "scripted" and not self.script_path:
            raise ConfigError("backend.script_path required for scripted backend")
        if self.timeout_ms <= 0:
            raise ConfigError("backend.timeout_ms must be positive")


@dataclass
class Config:
    mode: str = "automatic"
    backend: BackendConfig = field(default_factory=BackendConfig)
    temperature: float = 0.5
    max_context_tokens: int = 16384
    filter_threshold_chars: int = 8000
    chunk_chars: int = 4096
    memory_cap_chars: int = 2048
    max_iterations: int = 30
    retrieval_k: int = 3
    plan_repairs: int = 2
    command_timeout_ms: int = 300_000
    scenario_path: str = ""
    corpus_paths: list[str] = field(default_factory=list)
    listen_address: str = "127.0.0.1:8642"
    event_log_path: str = "engagement.events.jsonl"
    report_path: str = "engagement.report.json"
    template_dir: str = ""

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        positive = (
            "max_context_tokens", "filter_threshold_chars", "chunk_chars",
            "memory_cap_chars", "max_iterations", "retrieval_k",
            "command_timeout_ms",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.temperature <= 1.0:
            raise ConfigError("temperature must be in [0, 1]")
        if self.plan_repairs < 0:
            raise ConfigError("plan_repairs must be non-negative")
        self.backend.validate()

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        backend = BackendConfig(**data.get("backend", {}))
        kwargs = {k: v for k, v in data.items() if k != "backend"}
        config = cls(backend=backend, **kwargs)
        config.validate()
        return config

    @classmethod
    def load(cls, path: str) -> "Config":
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)
