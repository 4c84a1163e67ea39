import json
from pathlib import Path

import pytest

from redloop.gateway import BackendUnavailable, ChatRequest, ScriptedBackend, ScriptedRule
from redloop.taskgraph import Task

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = REPO_ROOT / "scenarios"


class FailingBackend:
    """Backend whose every call raises BackendUnavailable."""

    def reply(self, request: ChatRequest) -> str:
        raise BackendUnavailable("backend down")


class EchoBackend:
    """Backend replying with a constant (or the prompt itself)."""

    def __init__(self, reply: str | None = None) -> None:
        self._reply = reply
        self.calls: list[str] = []

    def reply(self, request: ChatRequest) -> str:
        text = request.prompt_text()
        self.calls.append(text)
        return self._reply if self._reply is not None else text


def scripted(*rules: tuple) -> ScriptedBackend:
    """Build a scripted backend from (match, reply[, once]) tuples."""
    parsed = []
    for rule in rules:
        match, reply = rule[0], rule[1]
        once = rule[2] if len(rule) > 2 else False
        parsed.append(ScriptedRule(match=match, reply=reply, once=once))
    return ScriptedBackend(parsed)


def plan_reply(tasks: list[dict]) -> str:
    return json.dumps({"tasks": tasks})


def task(seq: int, directive: str = "", prereqs=(), completed=False,
         succeeded=False, command=None, outcome=None, op_type="shell") -> Task:
    return Task(
        seq=seq,
        directive=directive or f"task {seq}",
        op_type=op_type,
        prerequisites=frozenset(prereqs),
        command=command,
        outcome=outcome,
        completed=completed,
        succeeded=succeeded,
    )


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS


# One line per acceptance criterion, echoed after the test summary so the
# verdicts survive output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
