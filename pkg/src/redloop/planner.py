"""Planning session and task session: initial plan generation, the
check-and-reflection loop, retrieval-backed task regeneration, LLM-driven
plan revision, and success-preserving merge."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

from .events import EventLog
from .executor import (
    ChannelClosed,
    EmptyCommand,
    JudgeConfig,
    check_success,
    filter_output,
    synthesize_command,
)
from .gateway import Backend, BackendUnavailable, ChatRequest, complete
from .knowledge import KnowledgeRepository, hashing_embedder
from .taskgraph import Task, TaskGraph, TaskGraphError, normalize_directive
from . import templates

__all__ = [
    "Plan",
    "ReflectionBudget",
    "PhaseOutcome",
    "PhaseDeps",
    "UnparseablePlan",
    "UnparseableTask",
    "MergeCycle",
    "generate_initial_plan",
    "regenerate_task",
    "update_plan",
    "merge_tasks",
    "run_phase",
    "NO_KNOWLEDGE_MARKER",
    "DEFAULT_PLAN_REPAIRS",
    "DEFAULT_MAX_ITERATIONS",
]

PHASES = ("reconnaissance", "scanning", "exploitation")
NO_KNOWLEDGE_MARKER = "(no prior knowledge available)"
DEFAULT_PLAN_REPAIRS = 2
DEFAULT_MAX_ITERATIONS = 30


class UnparseablePlan(Exception):
    """The backend's plan reply could not be parsed; carries the raw reply."""

    def __init__(self, message: str, raw_reply: str = "") -> None:
        self.raw_reply = raw_reply
        super().__init__(message)


class UnparseableTask(Exception):
    """The backend's regenerated-task reply could not be parsed."""


class MergeCycle(Exception):
    """Remapped prerequisites of a revised plan form a cycle."""


@dataclass
class Plan:
    graph: TaskGraph
    phase: str
    revision: int = 0
    goal: str = ""

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase: {self.phase!r}")
        if self.revision < 0:
            raise ValueError("revision must be non-negative")


@dataclass
class ReflectionBudget:
    """Halting guarantee for the reflection loop; the loop body has no
    termination bound of its own."""

    max_iterations: int = DEFAULT_MAX_ITERATIONS
    used: int = 0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    @property
    def exhausted(self) -> bool:
        return self.used >= self.max_iterations


@dataclass
class PhaseOutcome:
    plan: Plan
    finished: list[Task]
    halt_reason: str  # "all_done" | "blocked" | "budget_exhausted"
    flag_found: bool = False


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z0-9_-]*\n?", "", text)
        text = re.sub(r"\n?```$", "", text)
    return text.strip()


def parse_task_list(reply: str) -> list[Task]:
    """Parse an LLM plan reply into tasks without graph validation."""
    try:
        data = json.loads(_strip_fences(reply))
    except json.JSONDecodeError as exc:
        raise UnparseablePlan(f"plan reply is not JSON: {exc}", reply) from exc
    if isinstance(data, dict):
        data = data.get("tasks")
    if not isinstance(data, list):
        raise UnparseablePlan("plan reply has no task list", reply)
    try:
        return [Task.from_dict(item) for item in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise UnparseablePlan(f"malformed task entry: {exc}", reply) from exc


def generate_initial_plan(
    goal: str,
    phase: str,
    context_text: str,
    backend: Backend,
    repairs: int = DEFAULT_PLAN_REPAIRS,
    log: Optional[EventLog] = None,
) -> Plan:
    """Ask the backend for a phase plan; re-prompt up to ``repairs`` times on
    malformed output before giving up."""
    if not goal:
        raise ValueError("goal must be non-empty")
    prompt = templates.render(
        "plan_generation", goal=goal, phase=phase, context=context_text
    )
    last_error: Optional[UnparseablePlan] = None
    for attempt in range(repairs + 1):
        content = prompt
        if last_error is not None:
            content = (
                f"{prompt}\n\nYour previous reply was unusable "
                f"({last_error}). Reply with valid JSON only."
            )
        reply = complete(backend, ChatRequest(messages=[
            ("system", "You are the planning component of a penetration test."),
            ("user", content),
        ]))
        try:
            tasks = [
                replace(t, command=None, outcome=None, completed=False, succeeded=False)
                for t in parse_task_list(reply)
            ]
            graph = TaskGraph(tasks)
        except (UnparseablePlan, TaskGraphError) as exc:
            last_error = exc if isinstance(exc, UnparseablePlan) else \
                UnparseablePlan(str(exc), reply)
            if log is not None:
                log.append("warning", {
                    "message": "plan reply unusable, re-prompting",
                    "attempt": attempt + 1,
                    "error": str(exc),
                }, phase=phase)
            continue
        return Plan(graph=graph, phase=phase, goal=goal)
    raise last_error  # type: ignore[misc]


def regenerate_task(
    task: Task,
    knowledge: Sequence,
    backend: Backend,
) -> Task:
    """Produce a pending replacement for a failed task, informed by retrieved
    knowledge snippets; prerequisites are copied from the original."""
    snippets = "\n".join(
        f"- {item.entry.text if hasattr(item, 'entry') else item.text}"
        for item in knowledge
    ) or NO_KNOWLEDGE_MARKER
    prompt = templates.render(
        "task_regeneration",
        failed_directive=task.directive,
        failed_command=task.command or "",
        result=task.outcome or "",
        knowledge=snippets,
    )
    reply = complete(backend, ChatRequest(messages=[
        ("system", "You repair failed penetration-test tasks."),
        ("user", prompt),
    ]))
    try:
        data = json.loads(_strip_fences(reply))
        directive = data["directive"]
        if not isinstance(directive, str) or not directive.strip():
            raise KeyError("directive")
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UnparseableTask(f"regeneration reply unusable: {reply!r}") from exc
    return Task(
        seq=task.seq,
        directive=directive,
        op_type=task.op_type,
        prerequisites=task.prerequisites,
        command=data.get("command"),
        outcome=None,
        completed=False,
        succeeded=False,
    )


def merge_tasks(old_plan: Plan, new_plan: Union[Plan, Sequence[Task]]) -> Plan:
    """Success-preserving integration of a revised plan.

    Completed-successful tasks of the old plan always survive: those absent
    from the new plan come first with their prerequisites cleared (already
    satisfied); tasks of the new plan follow in order, reusing the completed
    original when directives match and otherwise entering as pending work.
    The result is renumbered to consecutive seqs.
    """
    new_tasks = list(new_plan.graph.tasks) if isinstance(new_plan, Plan) else list(new_plan)
    preserved = {
        t.normalized_directive: t
        for t in old_plan.graph.tasks
        if t.completed and t.succeeded
    }
    new_directives = {t.normalized_directive for t in new_tasks}

    merged: list[Task] = []
    out_seq = 0
    # carried-over successes not mentioned by the new plan
    for task in old_plan.graph.tasks:
        if not (task.completed and task.succeeded):
            continue
        if task.normalized_directive in new_directives:
            continue
        out_seq += 1
        merged.append(replace(task, seq=out_seq, prerequisites=frozenset()))

    # new plan tasks, reusing matching completed originals
    seq_map: dict[int, int] = {}
    pending_prereqs: list[tuple[int, frozenset[int]]] = []  # (index, new-plan prereqs)
    for new_task in new_tasks:
        out_seq += 1
        seq_map[new_task.seq] = out_seq
        original = preserved.get(new_task.normalized_directive)
        if original is not None:
            merged.append(replace(original, seq=out_seq, prerequisites=frozenset()))
        else:
            merged.append(Task(
                seq=out_seq,
                directive=new_task.directive,
                op_type=new_task.op_type,
                prerequisites=frozenset(),
                command=new_task.command,
                outcome=None,
                completed=False,
                succeeded=False,
            ))
        pending_prereqs.append((len(merged) - 1, new_task.prerequisites))

    for index, prereqs in pending_prereqs:
        try:
            remapped = frozenset(seq_map[p] for p in prereqs)
        except KeyError as exc:
            raise MergeCycle(f"prerequisite {exc} of revised plan does not resolve") from exc
        merged[index] = replace(merged[index], prerequisites=remapped)

    try:
        graph = TaskGraph(merged).renumber()
    except TaskGraphError as exc:
        raise MergeCycle(str(exc)) from exc
    return Plan(
        graph=graph,
        phase=old_plan.phase,
        revision=old_plan.revision + 1,
        goal=old_plan.goal,
    )


def update_plan(
    plan: Plan,
    failed: Task,
    result: str,
    backend: Backend,
    log: Optional[EventLog] = None,
) -> Plan:
    """LLM-driven plan revision after a failure.

    Prompts the backend with the success and failure lists and merges its
    revised plan; any unusable reply degrades to the original plan with a
    warning event rather than aborting the engagement.
    """
    successes = [t for t in plan.graph.tasks if t.completed and t.succeeded]
    failures = [t for t in plan.graph.tasks if t.completed and not t.succeeded]
    if failed.normalized_directive not in {t.normalized_directive for t in failures}:
        failures = failures + [failed]
    prompt = templates.render(
        "plan_revision",
        goal=plan.goal,
        phase=plan.phase,
        failed_directive=failed.directive,
        failed_command=failed.command or "",
        result=result,
        success_list="\n".join(f"- {t.directive}" for t in successes) or "(none)",
        failure_list="\n".join(f"- {t.directive}" for t in failures) or "(none)",
    )
    try:
        reply = complete(backend, ChatRequest(messages=[
            ("system", "You revise penetration-test plans after task failures."),
            ("user", prompt),
        ]))
        new_tasks = parse_task_list(reply)
        return merge_tasks(plan, new_tasks)
    except (BackendUnavailable, UnparseablePlan, MergeCycle) as exc:
        if log is not None:
            log.append("warning", {
                "message": "plan revision unusable, continuing with current plan",
                "error": str(exc),
            }, phase=plan.phase)
        return plan


@dataclass
class PhaseDeps:
    """Everything run_phase needs besides the plan and budget."""

    channel: object
    repo: KnowledgeRepository
    backend: Backend
    judge: JudgeConfig = field(default_factory=JudgeConfig)
    log: EventLog = field(default_factory=EventLog)
    context_text: str = ""
    engagement_id: str = "local"
    mode: str = "automatic"  # "automatic" | "semi_automatic" | "manual"
    approvals: Optional[object] = None  # ApprovalBroker, semi_automatic mode
    manual_source: Optional[object] = None  # ManualFeed, manual mode
    retrieval_k: int = 3
    flag: str = ""
    timeout_ms: int = 300_000
    embedder: object = hashing_embedder
    on_raw_outcome: Optional[object] = None  # callable(task, raw ExecutionResult)
    on_plan: Optional[object] = None  # callable(plan, current_seq), UI snapshots


def run_phase(plan: Plan, deps: PhaseDeps, budget: ReflectionBudget) -> PhaseOutcome:
    """Check-and-reflection loop over one phase plan.

    Each iteration executes the next ready task; success marks it completed
    and stores its embedding, failure triggers retrieval, regeneration, and
    LLM plan revision.  The loop halts when no ready task remains or the
    reflection budget is exhausted.
    """
    log = deps.log
    finished: list[Task] = []
    flag_found = False

    while True:
        task = plan.graph.next_task()
        if deps.on_plan is not None:
            deps.on_plan(plan, task.seq if task else None)
        if task is None:
            halt = "all_done" if plan.graph.all_completed() else "blocked"
            break
        if budget.exhausted:
            halt = "budget_exhausted"
            break
        budget.used += 1

        log.append("task_started", {"directive": task.directive},
                   engagement_id=deps.engagement_id, phase=plan.phase, seq=task.seq)

        command, rejected = _obtain_command(task, plan, deps)
        if rejected:
            attempted = replace(task, command=command,
                                outcome="operator_rejected",
                                completed=True, succeeded=False)
            plan = _reflect(plan, attempted, "operator_rejected", deps, budget)
            continue
        if command is None:
            # synthesis produced nothing usable; treated as a task failure
            attempted = replace(task, outcome="command synthesis failed",
                                completed=True, succeeded=False)
            plan = _reflect(plan, attempted, "command synthesis failed", deps, budget)
            continue

        try:
            result = deps.channel.execute(command, timeout_ms=deps.timeout_ms)
        except ChannelClosed:
            raise
        except NotImplementedError as exc:
            result = None
            outcome_text = f"channel error: {exc}"
            exit_code = 1
        else:
            outcome_text = result.output
            exit_code = result.exit_code

        if result is not None:
            for milestone in result.milestones_hit:
                log.append("milestone", {"id": milestone},
                           engagement_id=deps.engagement_id, phase=plan.phase,
                           seq=task.seq)
            if deps.on_raw_outcome is not None:
                deps.on_raw_outcome(task, result)

        if deps.flag and deps.flag in outcome_text:
            flag_found = True

        filtered = filter_output(outcome_text, deps.backend)
        was_filtered = filtered != outcome_text
        attempted = replace(task, command=command, outcome=filtered)

        judgement = check_success(
            attempted, outcome_text, exit_code, deps.judge, deps.backend
        )
        log.append("execution_result", {
            "command": command,
            "exit_code": exit_code,
            "outcome": filtered,
            "filtered": was_filtered,
            "succeeded": judgement.succeeded,
            "reason": judgement.reason,
        }, engagement_id=deps.engagement_id, phase=plan.phase, seq=task.seq)

        if judgement.succeeded:
            done = replace(attempted, completed=True, succeeded=True)
            plan = replace_in_plan(plan, done)
            finished.append(done)
            try:
                deps.repo.store(
                    text=(f"directive: {done.directive}\n"
                          f"command: {done.command}\n"
                          f"outcome: {done.outcome}"),
                    kind="past_task",
                    meta={"phase": plan.phase},
                    embedder=deps.embedder,
                )
            except Exception as exc:  # noqa: BLE001 - storage is best-effort
                log.append("warning", {"message": f"embedding store failed: {exc}"},
                           engagement_id=deps.engagement_id, phase=plan.phase)
            log.append("task_completed", {"directive": done.directive},
                       engagement_id=deps.engagement_id, phase=plan.phase,
                       seq=done.seq)
            if flag_found:
                halt = "all_done"
                break
        else:
            failed = replace(attempted, completed=True, succeeded=False)
            plan = _reflect(plan, failed, outcome_text, deps, budget)

    if deps.on_plan is not None:
        deps.on_plan(plan, None)
    return PhaseOutcome(plan=plan, finished=finished, halt_reason=halt,
                        flag_found=flag_found)


def replace_in_plan(plan: Plan, task: Task) -> Plan:
    return replace(plan, graph=plan.graph.replace_task(task))


def _obtain_command(task: Task, plan: Plan, deps: PhaseDeps):
    """Resolve the command to execute for a task under the current mode.

    Returns (command, rejected): command None means synthesis failed;
    rejected True means an operator vetoed the command.
    """
    if deps.mode == "manual" or task.op_type == "manual":
        if deps.manual_source is None:
            return None, False
        command = deps.manual_source.next_command()
        deps.log.append("command_synthesized",
                        {"command": command, "source": "manual"},
                        engagement_id=deps.engagement_id, phase=plan.phase,
                        seq=task.seq)
        return command, False

    try:
        command = synthesize_command(task, plan.phase, deps.context_text, deps.backend)
    except EmptyCommand:
        return None, False
    deps.log.append("command_synthesized", {"command": command, "source": "llm"},
                    engagement_id=deps.engagement_id, phase=plan.phase, seq=task.seq)

    if deps.mode == "semi_automatic" and deps.approvals is not None:
        item = deps.approvals.request(task.seq, command)
        deps.log.append("approval_requested",
                        {"approval_id": item.approval_id, "command": command},
                        engagement_id=deps.engagement_id, phase=plan.phase,
                        seq=task.seq)
        decision = item.wait()
        deps.log.append("approval_decision", {
            "approval_id": item.approval_id,
            "decision": decision.decision,
            "command": decision.command,
        }, engagement_id=deps.engagement_id, phase=plan.phase, seq=task.seq)
        if decision.decision == "reject":
            return command, True
        if decision.decision == "edit" and decision.command:
            return decision.command, False
    return command, False


def _reflect(plan: Plan, failed: Task, result: str, deps: PhaseDeps,
             budget: ReflectionBudget) -> Plan:
    """Failure path of the loop: retrieve, regenerate, merge, revise."""
    query = "\n".join(filter(None, [failed.directive, failed.command, result]))
    try:
        hits = deps.repo.retrieve(query, k=deps.retrieval_k, embedder=deps.embedder)
        hits = deps.repo.rerank(hits, query)
    except Exception:  # noqa: BLE001 - retrieval is best-effort
        hits = []

    try:
        replacement = regenerate_task(failed, hits, deps.backend)
        plan = replace(plan, graph=plan.graph.replace_task(replacement),
                       revision=plan.revision + 1)
    except UnparseableTask as exc:
        # leave the task failed in the graph; dependents stay blocked
        plan = replace_in_plan(plan, failed)
        deps.log.append("warning",
                        {"message": f"task regeneration unusable: {exc}"},
                        engagement_id=deps.engagement_id, phase=plan.phase,
                        seq=failed.seq)
        return plan

    plan = update_plan(plan, failed, result, deps.backend, log=deps.log)
    deps.log.append("plan_updated", {"revision": plan.revision},
                    engagement_id=deps.engagement_id, phase=plan.phase,
                    seq=failed.seq)
    return plan
