/** Thin fetch client for the engagement operator API, with cursor-based
 * incremental event polling. */

import type {
  ApprovalDecision,
  EngagementListing,
  EventPage,
  GraphSnapshot,
  PendingApproval,
} from "./types.js";

export class ApiClient {
  constructor(private readonly baseUrl: string) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`);
    if (!resp.ok) throw new Error(`GET ${path}: ${resp.status}`);
    return (await resp.json()) as T;
  }

  listEngagements(): Promise<EngagementListing[]> {
    return this.getJson("/engagements");
  }

  graph(engagementId: string): Promise<GraphSnapshot> {
    return this.getJson(`/engagements/${engagementId}/graph`);
  }

  events(engagementId: string, cursor: number): Promise<EventPage> {
    return this.getJson(
      `/engagements/${engagementId}/events?cursor=${cursor}`,
    );
  }

  approvals(engagementId: string): Promise<PendingApproval[]> {
    return this.getJson(`/engagements/${engagementId}/approvals`);
  }

  async decide(
    engagementId: string,
    approvalId: string,
    decision: ApprovalDecision,
    command?: string,
  ): Promise<void> {
    const resp = await fetch(
      `${this.baseUrl}/engagements/${engagementId}/approvals/${approvalId}`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ decision, command: command ?? null }),
      },
    );
    if (!resp.ok) throw new Error(`decision rejected: ${resp.status}`);
  }

  async submitManual(engagementId: string, command: string): Promise<void> {
    const resp = await fetch(
      `${this.baseUrl}/engagements/${engagementId}/manual`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ command }),
      },
    );
    if (!resp.ok) throw new Error(`manual command rejected: ${resp.status}`);
  }
}

/** Poll the event stream from a cursor, handing each new page to `onPage`.
 * Returns a stop function. */
export function pollEvents(
  client: ApiClient,
  engagementId: string,
  onPage: (page: EventPage) => void,
  intervalMs = 500,
): () => void {
  let cursor = 0;
  let stopped = false;
  const tick = async () => {
    if (stopped) return;
    try {
      const page = await client.events(engagementId, cursor);
      if (page.events.length > 0) {
        cursor = page.cursor;
        onPage(page);
      }
    } catch {
      // transient polling errors are retried on the next tick
    }
    if (!stopped) setTimeout(tick, intervalMs);
  };
  void tick();
  return () => {
    stopped = true;
  };
}
