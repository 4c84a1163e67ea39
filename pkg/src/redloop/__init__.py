"""Autonomous penetration-testing orchestration engine.

Plans an engagement as a task coordination graph, executes tasks through a
pluggable command synthesizer and shell channel, repairs failed plans via a
check-and-reflection loop with retrieval-augmented regeneration, hands
summarized context between phases, and scores runs with benchmark metrics.
"""

from .taskgraph import Task, TaskGraph, normalize_directive
from .planner import (
    Plan,
    ReflectionBudget,
    PhaseOutcome,
    generate_initial_plan,
    merge_tasks,
    regenerate_task,
    run_phase,
    update_plan,
)
from .knowledge import KnowledgeRepository, hashing_embedder
from .gateway import (
    ChatRequest,
    ScriptedBackend,
    HTTPBackend,
    complete,
    estimate_tokens,
    chunked_summarize,
)
from .executor import (
    Scenario,
    SimulatedShell,
    filter_output,
    check_success,
    synthesize_command,
)
from .coordinator import (
    PhaseContext,
    ShellStateLog,
    run_engagement,
    summarize_phase,
    update_shell_state,
)
from .metrics import RunRecord, overall_rate, subtask_1exp, subtask_5exp

__version__ = "0.1.0"
