/** Wire types of the engagement operator API. */

export interface EngagementEvent {
  ts: number;
  kind: string;
  engagement_id: string | null;
  phase: string | null;
  seq: number | null;
  payload: Record<string, unknown>;
}

export interface EventPage {
  events: EngagementEvent[];
  cursor: number;
}

export interface GraphTask {
  seq: number;
  directive: string;
  op_type: string;
  prerequisites: number[];
  command: string | null;
  outcome: string | null;
  completed: boolean;
  succeeded: boolean;
}

export interface GraphSnapshot {
  tasks: GraphTask[];
  current_seq: number | null;
}

export interface PendingApproval {
  approval_id: string;
  seq: number;
  command: string;
}

export interface EngagementListing {
  engagement_id: string;
  status: string;
}

export type ApprovalDecision = "approve" | "edit" | "reject";
