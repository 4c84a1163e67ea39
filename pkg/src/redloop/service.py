"""Operator service API: engagement listing, task-graph snapshots, the
incremental event stream, per-command approvals, and manual command entry."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .approvals import AlreadyResolved, ApprovalBroker, Decision, ManualFeed, UnknownApproval
from .coordinator import EngagementDeps, run_engagement
from .events import EventLog

__all__ = ["EngagementSession", "build_app"]


@dataclass
class EngagementSession:
    """One running (or finished) engagement and its operator-facing state."""

    engagement_id: str
    log: EventLog
    approvals: ApprovalBroker = field(default_factory=ApprovalBroker)
    manual: ManualFeed = field(default_factory=ManualFeed)
    status: str = "running"
    report: Optional[dict] = None
    _graph_snapshot: Optional[dict] = None
    _current_seq: Optional[int] = None
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def on_plan(self, plan, current_seq) -> None:
        import json

        with self._lock:
            self._graph_snapshot = json.loads(plan.graph.to_json())
            self._current_seq = current_seq

    def graph_snapshot(self) -> dict:
        with self._lock:
            snapshot = self._graph_snapshot or {"tasks": []}
            return {"tasks": snapshot["tasks"], "current_seq": self._current_seq}

    def start(self, goal: str, phases, deps: EngagementDeps) -> threading.Thread:
        deps.approvals = self.approvals
        deps.manual_source = self.manual
        deps.on_plan = self.on_plan

        def _run() -> None:
            try:
                self.report = run_engagement(goal, phases, deps,
                                             engagement_id=self.engagement_id)
                self.status = self.report["status"]
            except Exception as exc:  # noqa: BLE001 - surfaced via API status
                self.status = "error"
                self.log.append("warning", {"message": f"engagement aborted: {exc}"},
                                engagement_id=self.engagement_id)

        thread = threading.Thread(target=_run, daemon=True)
        thread.start()
        return thread


class ApprovalDecisionBody(BaseModel):
    decision: str
    command: Optional[str] = None


class ManualCommandBody(BaseModel):
    command: str


def build_app(sessions: dict[str, EngagementSession]) -> FastAPI:
    app = FastAPI(title="engagement operator API")

    def _session(engagement_id: str) -> EngagementSession:
        session = sessions.get(engagement_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown engagement")
        return session

    @app.get("/engagements")
    def list_engagements():
        return [
            {"engagement_id": eid, "status": s.status}
            for eid, s in sorted(sessions.items())
        ]

    @app.get("/engagements/{engagement_id}/graph")
    def get_graph(engagement_id: str):
        return _session(engagement_id).graph_snapshot()

    @app.get("/engagements/{engagement_id}/events")
    def get_events(engagement_id: str, cursor: int = 0):
        session = _session(engagement_id)
        events = session.log.events
        cursor = max(0, cursor)
        return {
            "events": [e.to_dict() for e in events[cursor:]],
            "cursor": len(events),
        }

    @app.get("/engagements/{engagement_id}/approvals")
    def get_approvals(engagement_id: str):
        session = _session(engagement_id)
        return [
            {"approval_id": item.approval_id, "seq": item.seq, "command": item.command}
            for item in session.approvals.pending()
        ]

    @app.post("/engagements/{engagement_id}/approvals/{approval_id}")
    def post_decision(engagement_id: str, approval_id: str, body: ApprovalDecisionBody):
        session = _session(engagement_id)
        try:
            decision = Decision(decision=body.decision, command=body.command)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        try:
            session.approvals.resolve(approval_id, decision)
        except UnknownApproval as exc:
            raise HTTPException(status_code=404, detail="unknown approval") from exc
        except AlreadyResolved as exc:
            raise HTTPException(status_code=409, detail="approval already resolved") from exc
        return {"status": "accepted"}

    @app.post("/engagements/{engagement_id}/manual")
    def post_manual(engagement_id: str, body: ManualCommandBody):
        session = _session(engagement_id)
        if not body.command:
            raise HTTPException(status_code=422, detail="command must be non-empty")
        session.manual.submit(body.command)
        return {"status": "queued"}

    return app
