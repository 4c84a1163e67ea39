"""Phase sequencing: recon -> scanning -> exploitation, the persistent
shell-state log, and the inter-phase summary handoff."""

from __future__ import annotations

import re
import uuid
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .approvals import ApprovalBroker, ManualFeed
from .events import Event, EventLog
from .executor import JudgeConfig, Scenario
from .gateway import Backend, BackendUnavailable, ChatRequest, complete, estimate_tokens
from .knowledge import KnowledgeRepository, hashing_embedder
from .planner import (
    PhaseDeps,
    ReflectionBudget,
    generate_initial_plan,
    run_phase,
)
from .taskgraph import Task
from . import templates

__all__ = [
    "PhaseContext",
    "ShellStateLog",
    "EngagementDeps",
    "build_phase_block",
    "summarize_phase",
    "update_shell_state",
    "run_engagement",
    "build_report",
    "DEFAULT_PHASES",
    "DEFAULT_SUMMARY_CAP_TOKENS",
]

DEFAULT_PHASES = ("reconnaissance", "scanning", "exploitation")
DEFAULT_SUMMARY_CAP_TOKENS = 2048
DEGRADED_MARKER = "[degraded]"

# Pattern table scanned against raw outcomes; first match per key wins.
DEFAULT_STATE_PATTERNS = (
    ("uid=0", "access_level", "root"),
    ("uid=", "access_level", "user"),
    (r"Linux [\w.\-]+", "os_context", None),  # None: use the matched text
    (r"Ubuntu[\w .\-]*", "os_context", None),
    (r"Windows[\w .\-]*", "os_context", None),
)


@dataclass
class ShellStateLog:
    """Append-only record of gained access level and system context."""

    entries: list[tuple[str, str, str, Optional[int]]] = field(default_factory=list)

    def append(self, phase: str, key: str, value: str, seq: Optional[int] = None) -> None:
        self.entries.append((phase, key, value, seq))

    def view(self) -> dict[str, str]:
        """Latest value per key; earlier entries are shadowed, never removed."""
        out: dict[str, str] = {}
        for _, key, value, _ in self.entries:
            out[key] = value
        return out

    @property
    def access_level(self) -> str:
        return self.view().get("access_level", "")

    @property
    def os_context(self) -> str:
        return self.view().get("os_context", "")

    def render(self) -> str:
        view = self.view()
        if not view:
            return "(no shell state recorded)"
        return "\n".join(f"{key}: {value}" for key, value in sorted(view.items()))


@dataclass
class PhaseContext:
    """Carry-over handed to each phase planner."""

    summary: str
    shell_state: ShellStateLog

    def render(self) -> str:
        return f"{self.summary}\n\nShell state:\n{self.shell_state.render()}"


def update_shell_state(
    log: ShellStateLog,
    phase: str,
    outcome: str,
    seq: Optional[int] = None,
    patterns: Sequence[tuple] = DEFAULT_STATE_PATTERNS,
) -> ShellStateLog:
    """Scan an outcome against the pattern table and append matches."""
    matched_keys: set[str] = set()
    for pattern, key, value in patterns:
        if key in matched_keys:
            continue
        match = re.search(pattern, outcome)
        if match:
            log.append(phase, key, value if value is not None else match.group(0), seq)
            matched_keys.add(key)
    return log


def build_phase_block(finished: Sequence[Task]) -> str:
    """Exact pre-summary concatenation of the finished-task history."""
    if not finished:
        return ""
    parts = ["Previous Phase:\n"]
    for task in finished:
        parts.append(
            f"Instruction: {task.directive}"
            f"Code: {task.command or ''}"
            f"Result: {task.outcome or ''}"
            "\n------\n"
        )
    return "".join(parts)


def summarize_phase(
    finished: Sequence[Task],
    backend: Backend,
    cap_tokens: int = DEFAULT_SUMMARY_CAP_TOKENS,
) -> str:
    """Condense a finished phase for the next planner.

    An empty history yields the empty context.  If the backend is down the
    raw block is returned truncated to the context cap and flagged degraded.
    """
    block = build_phase_block(finished)
    if not block:
        return ""
    prompt = templates.load("write_summary") + block
    try:
        summary = complete(backend, ChatRequest(messages=[
            ("system", "You condense penetration-test findings."),
            ("user", prompt),
        ]))
    except BackendUnavailable:
        cap_chars = cap_tokens * 4  # inverse of the bytes/4 token estimate
        return block[:cap_chars] + DEGRADED_MARKER
    while estimate_tokens(summary) > cap_tokens:
        summary = summary[: len(summary) - 256]
    return summary


@dataclass
class EngagementDeps:
    backend: Backend
    channel: object
    repo: KnowledgeRepository
    log: EventLog
    scenario: Optional[Scenario] = None
    mode: str = "automatic"
    approvals: Optional[ApprovalBroker] = None
    manual_source: Optional[ManualFeed] = None
    judge: Optional[JudgeConfig] = None
    retrieval_k: int = 3
    max_iterations: int = 30
    plan_repairs: int = 2
    timeout_ms: int = 300_000
    embedder: object = hashing_embedder
    on_plan: Optional[object] = None  # callable(plan, current_seq)


def run_engagement(
    goal: str,
    phases: Sequence[str],
    deps: EngagementDeps,
    engagement_id: Optional[str] = None,
) -> dict:
    """Drive the configured phase sequence end to end.

    Each phase receives a summary of the previous phase's finished tasks
    plus the shell-state log.  The engagement ends early with status success
    as soon as the scenario flag shows up in any raw outcome.
    """
    if not phases:
        raise ValueError("phases must be non-empty")
    engagement_id = engagement_id or uuid.uuid4().hex[:12]
    log = deps.log
    flag = deps.scenario.flag if deps.scenario else ""
    judge = deps.judge or JudgeConfig(success_patterns=(flag,) if flag else ())
    shell_state = ShellStateLog()

    prev_finished: list[Task] = []
    status = "incomplete"
    flag_found = False

    for index, phase in enumerate(phases):
        summary = summarize_phase(prev_finished, deps.backend) if index else ""
        context = PhaseContext(summary=summary, shell_state=shell_state)

        plan = generate_initial_plan(
            goal, phase, context.render(), deps.backend,
            repairs=deps.plan_repairs, log=log,
        )
        log.append("plan_created",
                   {"tasks": len(plan.graph), "revision": plan.revision},
                   engagement_id=engagement_id, phase=phase)

        def on_raw(task: Task, result) -> None:
            update_shell_state(shell_state, phase, result.output, task.seq)

        phase_deps = PhaseDeps(
            channel=deps.channel,
            repo=deps.repo,
            backend=deps.backend,
            judge=judge,
            log=log,
            context_text=context.render(),
            engagement_id=engagement_id,
            mode=deps.mode,
            approvals=deps.approvals,
            manual_source=deps.manual_source,
            retrieval_k=deps.retrieval_k,
            flag=flag,
            timeout_ms=deps.timeout_ms,
            embedder=deps.embedder,
            on_raw_outcome=on_raw,
            on_plan=deps.on_plan,
        )
        budget = ReflectionBudget(max_iterations=deps.max_iterations)
        outcome = run_phase(plan, phase_deps, budget)

        succeeded = sum(
            1 for t in outcome.plan.graph.tasks if t.completed and t.succeeded
        )
        log.append("phase_summary", {
            "halt_reason": outcome.halt_reason,
            "tasks_total": len(outcome.plan.graph),
            "tasks_succeeded": succeeded,
        }, engagement_id=engagement_id, phase=phase)

        prev_finished = outcome.finished

        if outcome.flag_found:
            flag_found = True
            status = "success"
            log.append("flag_found", {"flag": flag},
                       engagement_id=engagement_id, phase=phase)
            break

    log.append("engagement_finished", {
        "status": status,
        "event_log_path": str(log.path) if log.path else "",
    }, engagement_id=engagement_id)
    return build_report(log.events)


def build_report(events: Sequence[Event]) -> dict:
    """Pure function from an event sequence to the engagement report."""
    phases = []
    milestones: set[str] = set()
    flag_found = False
    status = "incomplete"
    log_path = ""
    for event in events:
        if event.kind == "phase_summary":
            phases.append({
                "phase": event.phase,
                "halt_reason": event.payload.get("halt_reason"),
                "tasks_total": event.payload.get("tasks_total"),
                "tasks_succeeded": event.payload.get("tasks_succeeded"),
            })
        elif event.kind == "milestone":
            milestones.add(event.payload["id"])
        elif event.kind == "flag_found":
            flag_found = True
        elif event.kind == "engagement_finished":
            status = event.payload.get("status", "incomplete")
            log_path = event.payload.get("event_log_path", "")
    return {
        "status": status,
        "phases": phases,
        "milestones_hit": sorted(milestones),
        "flag_found": flag_found,
        "event_log_path": log_path,
    }
