"""Append-only engagement event log (JSON lines) and pure replay."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

__all__ = ["Event", "EventLog", "TruncatedLog", "read_events", "EVENT_KINDS"]

EVENT_KINDS = frozenset({
    "plan_created",
    "task_started",
    "command_synthesized",
    "approval_requested",
    "approval_decision",
    "execution_result",
    "task_completed",
    "plan_updated",
    "phase_summary",
    "milestone",
    "flag_found",
    "engagement_finished",
    "warning",
})


class TruncatedLog(Exception):
    """Log file ends mid-event; carries the last good byte offset."""

    def __init__(self, offset: int) -> None:
        self.offset = offset
        super().__init__(f"event log truncated; last good offset {offset}")


@dataclass(frozen=True)
class Event:
    kind: str
    payload: dict = field(default_factory=dict)
    engagement_id: Optional[str] = None
    phase: Optional[str] = None
    seq: Optional[int] = None
    ts: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "ts": self.ts,
            "kind": self.kind,
            "engagement_id": self.engagement_id,
            "phase": self.phase,
            "seq": self.seq,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Event":
        return cls(
            kind=data["kind"],
            payload=data.get("payload", {}),
            engagement_id=data.get("engagement_id"),
            phase=data.get("phase"),
            seq=data.get("seq"),
            ts=data.get("ts", 0.0),
        )


class EventLog:
    """Strictly append-only, totally ordered by write order.

    Events are kept in memory and optionally mirrored to a JSONL file,
    one event per line, flushed per write for crash tolerance.
    """

    def __init__(self, path: Optional[str] = None) -> None:
        self.path = Path(path) if path else None
        self._events: list[Event] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            # truncate: one log per engagement
            self.path.write_text("", encoding="utf-8")

    @property
    def events(self) -> tuple[Event, ...]:
        return tuple(self._events)

    def append(
        self,
        kind: str,
        payload: Optional[dict] = None,
        engagement_id: Optional[str] = None,
        phase: Optional[str] = None,
        seq: Optional[int] = None,
    ) -> Event:
        event = Event(
            kind=kind,
            payload=payload or {},
            engagement_id=engagement_id,
            phase=phase,
            seq=seq,
            ts=time.time(),
        )
        self._events.append(event)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event.to_dict()) + "\n")
        return event

    def kinds(self) -> list[str]:
        return [e.kind for e in self._events]


def read_events(path: str) -> list[Event]:
    """Parse a JSONL event log; raise TruncatedLog on a broken tail."""
    events: list[Event] = []
    offset = 0
    raw = Path(path).read_bytes()
    if not raw:
        raise ValueError(f"empty event log: {path}")
    for line in raw.split(b"\n"):
        if not line:
            continue
        try:
            events.append(Event.from_dict(json.loads(line.decode("utf-8"))))
        except (json.JSONDecodeError, UnicodeDecodeError, KeyError) as exc:
            raise TruncatedLog(offset) from exc
        offset += len(line) + 1
    return events
