/** Pure reducer that reconstructs operator-facing state from the event
 * stream alone, so the console never needs server-side session state. */

import type { EngagementEvent } from "./types.js";

export type TaskStatus = "running" | "succeeded" | "failed";

export interface TaskView {
  phase: string;
  seq: number;
  directive: string;
  command: string | null;
  commandSource: string | null;
  status: TaskStatus;
  outcome: string | null;
  /** true when the displayed outcome was condensed, not raw */
  filtered: boolean;
}

export interface ApprovalView {
  approvalId: string;
  phase: string;
  seq: number;
  command: string;
  decision: string | null;
  finalCommand: string | null;
}

export interface PhaseView {
  phase: string;
  haltReason: string;
  tasksTotal: number;
  tasksSucceeded: number;
}

export interface ConsoleState {
  status: string; // "running" until engagement_finished
  currentPhase: string | null;
  planRevision: number;
  tasks: TaskView[];
  approvals: ApprovalView[];
  milestones: string[];
  phases: PhaseView[];
  warnings: string[];
  flagFound: boolean;
  eventCount: number;
}

export function initialState(): ConsoleState {
  return {
    status: "running",
    currentPhase: null,
    planRevision: 0,
    tasks: [],
    approvals: [],
    milestones: [],
    phases: [],
    warnings: [],
    flagFound: false,
    eventCount: 0,
  };
}

export function pendingApprovals(state: ConsoleState): ApprovalView[] {
  return state.approvals.filter((a) => a.decision === null);
}

function taskKey(phase: string | null, seq: number | null): string {
  return `${phase ?? ""}:${seq ?? ""}`;
}

function findTask(
  state: ConsoleState,
  phase: string | null,
  seq: number | null,
): TaskView | undefined {
  const key = taskKey(phase, seq);
  return state.tasks.find((t) => taskKey(t.phase, t.seq) === key);
}

export function applyEvent(
  state: ConsoleState,
  event: EngagementEvent,
): ConsoleState {
  const next: ConsoleState = {
    ...state,
    tasks: state.tasks.map((t) => ({ ...t })),
    approvals: state.approvals.map((a) => ({ ...a })),
    milestones: [...state.milestones],
    phases: [...state.phases],
    warnings: [...state.warnings],
    eventCount: state.eventCount + 1,
  };
  const payload = event.payload;

  switch (event.kind) {
    case "plan_created":
      next.currentPhase = event.phase;
      next.planRevision = Number(payload["revision"] ?? 0);
      break;
    case "task_started": {
      const existing = findTask(next, event.phase, event.seq);
      if (existing) {
        existing.status = "running";
        existing.directive = String(payload["directive"] ?? existing.directive);
      } else {
        next.tasks.push({
          phase: event.phase ?? "",
          seq: event.seq ?? 0,
          directive: String(payload["directive"] ?? ""),
          command: null,
          commandSource: null,
          status: "running",
          outcome: null,
          filtered: false,
        });
      }
      break;
    }
    case "command_synthesized": {
      const task = findTask(next, event.phase, event.seq);
      if (task) {
        task.command = String(payload["command"] ?? "");
        task.commandSource = String(payload["source"] ?? "");
      }
      break;
    }
    case "approval_requested":
      next.approvals.push({
        approvalId: String(payload["approval_id"] ?? ""),
        phase: event.phase ?? "",
        seq: event.seq ?? 0,
        command: String(payload["command"] ?? ""),
        decision: null,
        finalCommand: null,
      });
      break;
    case "approval_decision": {
      const id = String(payload["approval_id"] ?? "");
      const approval = next.approvals.find((a) => a.approvalId === id);
      if (approval) {
        approval.decision = String(payload["decision"] ?? "");
        approval.finalCommand =
          payload["command"] == null ? null : String(payload["command"]);
      }
      break;
    }
    case "execution_result": {
      const task = findTask(next, event.phase, event.seq);
      if (task) {
        task.status = payload["succeeded"] ? "succeeded" : "failed";
        task.outcome = String(payload["outcome"] ?? "");
        task.filtered = Boolean(payload["filtered"]);
        task.command = String(payload["command"] ?? task.command ?? "");
      }
      break;
    }
    case "task_completed": {
      const task = findTask(next, event.phase, event.seq);
      if (task) task.status = "succeeded";
      break;
    }
    case "plan_updated":
      next.planRevision = Number(payload["revision"] ?? next.planRevision);
      break;
    case "milestone": {
      const id = String(payload["id"] ?? "");
      if (!next.milestones.includes(id)) next.milestones.push(id);
      break;
    }
    case "phase_summary":
      next.phases.push({
        phase: event.phase ?? "",
        haltReason: String(payload["halt_reason"] ?? ""),
        tasksTotal: Number(payload["tasks_total"] ?? 0),
        tasksSucceeded: Number(payload["tasks_succeeded"] ?? 0),
      });
      break;
    case "flag_found":
      next.flagFound = true;
      break;
    case "engagement_finished":
      next.status = String(payload["status"] ?? "incomplete");
      break;
    case "warning":
      next.warnings.push(String(payload["message"] ?? ""));
      break;
    default:
      break;
  }
  return next;
}

export function reduceEvents(
  events: EngagementEvent[],
  from: ConsoleState = initialState(),
): ConsoleState {
  return events.reduce(applyEvent, from);
}
