"""Operator decision plumbing for semi-automatic and manual modes.

The engagement loop blocks at approval points; decisions arrive from the
service API (or directly from tests) on other threads.
"""

from __future__ import annotations

import itertools
import queue
import threading
from dataclasses import dataclass, field
from typing import Optional

__all__ = ["Decision", "ApprovalItem", "ApprovalBroker", "ManualFeed",
           "AlreadyResolved", "UnknownApproval"]

DECISIONS = ("approve", "edit", "reject")


class AlreadyResolved(Exception):
    """A decision was already recorded for this approval."""


class UnknownApproval(KeyError):
    """No pending or resolved approval with this id."""


@dataclass(frozen=True)
class Decision:
    decision: str  # "approve" | "edit" | "reject"
    command: Optional[str] = None

    def __post_init__(self) -> None:
        if self.decision not in DECISIONS:
            raise ValueError(f"unknown decision: {self.decision!r}")


@dataclass
class ApprovalItem:
    approval_id: str
    seq: int
    command: str
    _event: threading.Event = field(default_factory=threading.Event, repr=False)
    _decision: Optional[Decision] = None

    @property
    def resolved(self) -> bool:
        return self._decision is not None

    def wait(self, timeout: Optional[float] = None) -> Decision:
        if not self._event.wait(timeout):
            raise TimeoutError(f"approval {self.approval_id} timed out")
        assert self._decision is not None
        return self._decision


class ApprovalBroker:
    """Single queue of per-command approvals consumed by one engagement loop."""

    def __init__(self) -> None:
        self._items: dict[str, ApprovalItem] = {}
        self._counter = itertools.count(1)
        self._lock = threading.Lock()

    def request(self, seq: int, command: str) -> ApprovalItem:
        with self._lock:
            approval_id = f"a{next(self._counter)}"
            item = ApprovalItem(approval_id=approval_id, seq=seq, command=command)
            self._items[approval_id] = item
            return item

    def pending(self) -> list[ApprovalItem]:
        with self._lock:
            return [i for i in self._items.values() if not i.resolved]

    def resolve(self, approval_id: str, decision: Decision) -> ApprovalItem:
        with self._lock:
            item = self._items.get(approval_id)
            if item is None:
                raise UnknownApproval(approval_id)
            if item.resolved:
                raise AlreadyResolved(approval_id)
            item._decision = decision
            item._event.set()
            return item


class ManualFeed:
    """Blocking queue of operator-typed commands for manual mode."""

    def __init__(self) -> None:
        self._queue: "queue.Queue[str]" = queue.Queue()

    def submit(self, command: str) -> None:
        if not command:
            raise ValueError("command must be non-empty")
        self._queue.put(command)

    def next_command(self, timeout: Optional[float] = None) -> str:
        return self._queue.get(timeout=timeout)
