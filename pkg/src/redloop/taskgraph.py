"""Task coordination graph: nodes, prerequisite edges, readiness, renumbering.

The graph is the unit of planning.  Tasks are keyed by a positive sequence
number; an edge u -> v exists iff u is listed in v's prerequisites.  All
mutating operations keep the graph a DAG and keep every prerequisite
reference resolvable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

__all__ = [
    "Task",
    "TaskGraph",
    "TaskGraphError",
    "DuplicateSeq",
    "DanglingPrerequisite",
    "CycleIntroduced",
    "normalize_directive",
]

_WS_RUN = re.compile(r"\s+")


def normalize_directive(text: str) -> str:
    """Canonical form used to match tasks across plan versions.

    Trims and collapses internal whitespace runs; case is preserved.
    """
    return _WS_RUN.sub(" ", text.strip())


class TaskGraphError(Exception):
    """Base for graph construction failures; carries the offending seq."""

    def __init__(self, seq: int, message: str) -> None:
        self.seq = seq
        super().__init__(message)


class DuplicateSeq(TaskGraphError):
    def __init__(self, seq: int) -> None:
        super().__init__(seq, f"task seq {seq} already present in graph")


class DanglingPrerequisite(TaskGraphError):
    def __init__(self, seq: int) -> None:
        super().__init__(seq, f"prerequisite {seq} does not resolve to any task")


class CycleIntroduced(TaskGraphError):
    def __init__(self, seq: int) -> None:
        super().__init__(seq, f"inserting task {seq} would create a cycle")


@dataclass(frozen=True)
class Task:
    """One node of the coordination graph."""

    seq: int
    directive: str
    op_type: str = "shell"  # "shell" | "manual"
    prerequisites: frozenset[int] = frozenset()
    command: Optional[str] = None
    outcome: Optional[str] = None
    completed: bool = False
    succeeded: bool = False

    def __post_init__(self) -> None:
        if self.seq <= 0:
            raise ValueError(f"seq must be positive, got {self.seq}")
        if self.op_type not in ("shell", "manual"):
            raise ValueError(f"unknown op_type: {self.op_type!r}")
        if self.seq in self.prerequisites:
            raise ValueError(f"task {self.seq} lists itself as prerequisite")
        if self.succeeded and not self.completed:
            raise ValueError("succeeded implies completed")
        object.__setattr__(self, "prerequisites", frozenset(self.prerequisites))

    @property
    def normalized_directive(self) -> str:
        return normalize_directive(self.directive)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "directive": self.directive,
            "op_type": self.op_type,
            "prerequisites": sorted(self.prerequisites),
            "command": self.command,
            "outcome": self.outcome,
            "completed": self.completed,
            "succeeded": self.succeeded,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Task":
        return cls(
            seq=int(data["seq"]),
            directive=str(data["directive"]),
            op_type=data.get("op_type", "shell"),
            prerequisites=frozenset(int(p) for p in data.get("prerequisites", [])),
            command=data.get("command"),
            outcome=data.get("outcome"),
            completed=bool(data.get("completed", False)),
            succeeded=bool(data.get("succeeded", False)),
        )


class TaskGraph:
    """Immutable-style DAG of tasks; mutating operations return new graphs."""

    def __init__(self, tasks: Iterable[Task] = ()) -> None:
        self._tasks: dict[int, Task] = {}
        for task in sorted(tasks, key=lambda t: t.seq):
            self._tasks = _insert(self._tasks, task)

    @property
    def tasks(self) -> tuple[Task, ...]:
        """Tasks in ascending seq order."""
        return tuple(self._tasks[s] for s in sorted(self._tasks))

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Edges (u, v) with u a prerequisite of v, in deterministic order."""
        out: list[tuple[int, int]] = []
        for task in self.tasks:
            for pre in sorted(task.prerequisites):
                out.append((pre, task.seq))
        return tuple(sorted(out))

    def __len__(self) -> int:
        return len(self._tasks)

    def __iter__(self) -> Iterator[Task]:
        return iter(self.tasks)

    def __contains__(self, seq: int) -> bool:
        return seq in self._tasks

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TaskGraph):
            return NotImplemented
        return self._tasks == other._tasks

    def get(self, seq: int) -> Task:
        return self._tasks[seq]

    def add_task(self, task: Task) -> "TaskGraph":
        """Return a new graph with ``task`` inserted (or replaced if a task
        with the same seq is being rewritten via ``replace_task``)."""
        graph = TaskGraph.__new__(TaskGraph)
        graph._tasks = _insert(self._tasks, task)
        return graph

    def replace_task(self, task: Task) -> "TaskGraph":
        """Return a new graph with the task of the same seq swapped out."""
        if task.seq not in self._tasks:
            raise DanglingPrerequisite(task.seq)
        tasks = dict(self._tasks)
        tasks[task.seq] = task
        _check_resolvable(tasks)
        cycle = _find_cycle_member(tasks)
        if cycle is not None:
            raise CycleIntroduced(task.seq)
        graph = TaskGraph.__new__(TaskGraph)
        graph._tasks = tasks
        return graph

    def next_task(self) -> Optional[Task]:
        """Lowest-seq incomplete task whose prerequisites all succeeded."""
        ready = self.ready_set()
        if not ready:
            return None
        return min(ready, key=lambda t: t.seq)

    def ready_set(self) -> set[Task]:
        """All incomplete tasks whose prerequisites are completed-and-succeeded."""
        out: set[Task] = set()
        for task in self.tasks:
            if task.completed:
                continue
            if all(self._tasks[p].completed and self._tasks[p].succeeded
                   for p in task.prerequisites):
                out.add(task)
        return out

    def all_completed(self) -> bool:
        return all(t.completed for t in self._tasks.values())

    def renumber(self) -> "TaskGraph":
        """Relabel seqs to consecutive 1..n preserving relative order."""
        mapping = {old: new for new, old in enumerate(sorted(self._tasks), start=1)}
        tasks = [
            replace(
                t,
                seq=mapping[t.seq],
                prerequisites=frozenset(mapping[p] for p in t.prerequisites),
            )
            for t in self.tasks
        ]
        return TaskGraph(tasks)

    def to_json(self) -> str:
        return json.dumps({"tasks": [t.to_dict() for t in self.tasks]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TaskGraph":
        data = json.loads(text)
        raw = data["tasks"] if isinstance(data, dict) else data
        return cls(Task.from_dict(item) for item in raw)


def _insert(tasks: dict[int, Task], task: Task) -> dict[int, Task]:
    if task.seq in tasks:
        raise DuplicateSeq(task.seq)
    merged = dict(tasks)
    merged[task.seq] = task
    _check_resolvable(merged)
    cycle = _find_cycle_member(merged)
    if cycle is not None:
        raise CycleIntroduced(task.seq)
    return merged


def _check_resolvable(tasks: dict[int, Task]) -> None:
    for task in tasks.values():
        for pre in task.prerequisites:
            if pre not in tasks:
                raise DanglingPrerequisite(pre)


def _find_cycle_member(tasks: dict[int, Task]) -> Optional[int]:
    """Return a seq on some cycle, or None if the graph is acyclic."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {seq: WHITE for seq in tasks}
    for start in sorted(tasks):
        if color[start] != WHITE:
            continue
        stack: list[tuple[int, Iterator[int]]] = [
            (start, iter(sorted(tasks[start].prerequisites)))
        ]
        color[start] = GREY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GREY:
                    return nxt
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    stack.append((nxt, iter(sorted(tasks[nxt].prerequisites))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return None
