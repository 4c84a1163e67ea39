"""Action execution: command synthesis, the simulated shell channel,
output filtering, and success judgement."""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .gateway import (
    Backend,
    BackendUnavailable,
    ChatRequest,
    chunked_summarize,
    complete,
    DEFAULT_CHUNK_CHARS,
    DEFAULT_MEMORY_CAP_CHARS,
)
from .taskgraph import Task
from . import templates

__all__ = [
    "Scenario",
    "ScenarioRule",
    "SimulatedShell",
    "RemoteStubChannel",
    "ExecutionResult",
    "SuccessJudgement",
    "EmptyCommand",
    "ChannelClosed",
    "synthesize_command",
    "filter_output",
    "check_success",
    "PHASE_TOOL_FAMILIES",
    "FILTER_THRESHOLD_CHARS",
    "DEFAULT_FAILURE_PATTERNS",
]

FILTER_THRESHOLD_CHARS = 8000
TRUNCATION_MARKER = "\n[truncated]"

# Per-phase tool families used to steer command synthesis prompts.
PHASE_TOOL_FAMILIES = {
    "reconnaissance": ["nmap", "dirb", "gobuster", "amass"],
    "scanning": ["nikto", "wpscan", "sqlmap"],
    "exploitation": ["metasploit", "hydra", "john", "searchsploit"],
}

DEFAULT_FAILURE_PATTERNS = (
    "command not found",
    "No such file",
    "Connection refused",
    "Permission denied",
    "syntax error",
)


class EmptyCommand(Exception):
    """Command synthesis produced a blank command."""


class ChannelClosed(Exception):
    """The shell channel is no longer usable."""


@dataclass(frozen=True)
class ExecutionResult:
    exit_code: int
    output: str
    duration_ms: float
    milestones_hit: tuple[str, ...] = ()


@dataclass(frozen=True)
class SuccessJudgement:
    succeeded: bool
    reason: str
    source: str  # "rule" | "llm"


@dataclass(frozen=True)
class ScenarioRule:
    state: str  # state name or "*"
    pattern: str
    output: str
    exit_code: int = 0
    next_state: Optional[str] = None
    milestones_hit: tuple[str, ...] = ()


@dataclass(frozen=True)
class Scenario:
    """Deterministic target environment driven by (state, command) rules."""

    initial_state: str
    flag: str
    milestones: tuple[dict, ...]
    rules: tuple[ScenarioRule, ...]

    def __post_init__(self) -> None:
        milestone_ids = {m["id"] for m in self.milestones}
        states = {self.initial_state} | {
            r.next_state for r in self.rules if r.next_state is not None
        }
        for rule in self.rules:
            if rule.state != "*" and rule.state not in states:
                raise ValueError(f"rule references unknown state {rule.state!r}")
            for mid in rule.milestones_hit:
                if mid not in milestone_ids:
                    raise ValueError(f"rule references unknown milestone {mid!r}")

    @classmethod
    def load(cls, path: str) -> "Scenario":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return cls(
            initial_state=data["initial_state"],
            flag=data["flag"],
            milestones=tuple(data.get("milestones", [])),
            rules=tuple(
                ScenarioRule(
                    state=r["state"],
                    pattern=r["pattern"],
                    output=r["output"],
                    exit_code=int(r.get("exit_code", 0)),
                    next_state=r.get("next_state"),
                    milestones_hit=tuple(r.get("milestones_hit", [])),
                )
                for r in data["rules"]
            ),
        )

    @property
    def milestone_ids(self) -> set[str]:
        return {m["id"] for m in self.milestones}


class SimulatedShell:
    """Shell channel whose behavior is fully scripted by a Scenario."""

    kind = "simulated"

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.state = scenario.initial_state
        self._closed = False

    @property
    def state_id(self) -> str:
        return self.state

    def execute(self, command: str, timeout_ms: int = 300_000) -> ExecutionResult:
        if self._closed:
            raise ChannelClosed("simulated channel closed")
        if not command:
            raise ValueError("command must be non-empty")
        started = time.perf_counter()
        for rule in self.scenario.rules:
            if rule.state not in ("*", self.state):
                continue
            if re.search(rule.pattern, command):
                if rule.next_state is not None:
                    self.state = rule.next_state
                duration = (time.perf_counter() - started) * 1000.0
                return ExecutionResult(
                    exit_code=rule.exit_code,
                    output=rule.output,
                    duration_ms=duration,
                    milestones_hit=rule.milestones_hit,
                )
        duration = (time.perf_counter() - started) * 1000.0
        return ExecutionResult(
            exit_code=127,
            output=f"command not found: {command}",
            duration_ms=duration,
        )

    def close(self) -> None:
        self._closed = True


class RemoteStubChannel:
    """Interface reserved for a live remote-exec deployment; not implemented."""

    kind = "remote_stub"
    state_id = "remote"

    def execute(self, command: str, timeout_ms: int = 300_000) -> ExecutionResult:
        raise NotImplementedError("remote execution channel is a deployment stub")

    def close(self) -> None:
        pass


_FENCE = re.compile(r"^```[a-zA-Z0-9_-]*\n?|\n?```$")


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z0-9_-]*\n?", "", text)
        text = re.sub(r"\n?```$", "", text)
    return text.strip()


def synthesize_command(task: Task, phase: str, context_text: str, backend: Backend) -> str:
    """Turn a directive into one tool-specific command line via the backend."""
    if task.op_type != "shell":
        raise ValueError("only shell tasks are synthesized")
    tools = ", ".join(PHASE_TOOL_FAMILIES.get(phase, []))
    prompt = templates.render(
        "command_synthesis",
        directive=task.directive,
        phase=phase,
        tools=tools,
        context=context_text,
    )
    reply = complete(backend, ChatRequest(messages=[
        ("system", "You translate pentest task directives into exact shell commands."),
        ("user", prompt),
    ]))
    command = _strip_fences(reply)
    if not command:
        raise EmptyCommand(f"backend returned empty command for: {task.directive}")
    return command


def filter_output(raw: str, backend: Backend) -> str:
    """Identity at or below the 8,000-char threshold; above it, extract the
    essentials via chunked summarization.  On backend failure, fall back to
    the first 8,000 chars plus a truncation marker."""
    if len(raw) <= FILTER_THRESHOLD_CHARS:
        return raw
    instruction = templates.render("output_filter")
    try:
        return chunked_summarize(
            backend, raw, instruction,
            chunk_chars=DEFAULT_CHUNK_CHARS,
            memory_cap_chars=DEFAULT_MEMORY_CAP_CHARS,
        )
    except BackendUnavailable:
        return raw[:FILTER_THRESHOLD_CHARS] + TRUNCATION_MARKER


@dataclass
class JudgeConfig:
    mode: str = "rule"  # "rule" | "llm"
    success_patterns: tuple[str, ...] = ()
    failure_patterns: tuple[str, ...] = DEFAULT_FAILURE_PATTERNS


def check_success(
    task: Task,
    outcome: str,
    exit_code: int,
    judge: JudgeConfig,
    backend: Optional[Backend] = None,
) -> SuccessJudgement:
    """Judge a task outcome.

    Rule mode precedence: any success pattern match wins, then any failure
    pattern match loses, then a zero exit code wins.
    """
    if judge.mode == "llm" and backend is not None:
        try:
            reply = complete(backend, ChatRequest(messages=[
                ("system", "You judge whether a pentest task succeeded. "
                           "Answer with YES or NO on the first line."),
                ("user", f"Directive: {task.directive}\nOutcome:\n{outcome}"),
            ]))
            head = re.match(r"\s*([A-Za-z]+)", reply)
            token = head.group(1).upper() if head else ""
            if token in ("YES", "NO"):
                return SuccessJudgement(
                    succeeded=token == "YES",
                    reason=f"llm verdict: {token}",
                    source="llm",
                )
        except BackendUnavailable:
            pass
        # unusable verdict: fall back to rule mode
    for pat in judge.success_patterns:
        if pat and pat in outcome:
            return SuccessJudgement(True, f"success pattern matched: {pat!r}", "rule")
    for pat in judge.failure_patterns:
        if pat and pat in outcome:
            return SuccessJudgement(False, f"failure pattern matched: {pat!r}", "rule")
    if exit_code == 0:
        return SuccessJudgement(True, "exit code 0 with no failure pattern", "rule")
    return SuccessJudgement(False, f"nonzero exit code {exit_code}", "rule")
