/** Browser entry point: wires the API client, event reducer, DAG renderer,
 * approval queue, and manual command form into the page. */

import { ApiClient, pollEvents } from "./api.js";
import {
  ConsoleState,
  initialState,
  pendingApprovals,
  reduceEvents,
} from "./state.js";
import { renderGraphSvg } from "./render.js";

const ENGAGEMENT_ID = "e1";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function renderTasks(state: ConsoleState): string {
  return state.tasks
    .map((t) => {
      const badge = t.filtered
        ? ` <span class="badge">filtered</span>`
        : "";
      return (
        `<li class="task ${t.status}">` +
        `<strong>${t.phase} #${t.seq}</strong> ${t.directive} ` +
        `<code>${t.command ?? ""}</code> — ${t.status}${badge}</li>`
      );
    })
    .join("");
}

function renderStatus(state: ConsoleState): string {
  const flag = state.flagFound ? " — flag captured" : "";
  const milestones = state.milestones.length
    ? ` | milestones: ${state.milestones.join(", ")}`
    : "";
  return `${state.status}${flag}${milestones}`;
}

export function boot(baseUrl: string): () => void {
  const client = new ApiClient(baseUrl);
  let state = initialState();

  const redraw = async () => {
    el("status").textContent = renderStatus(state);
    el("tasks").innerHTML = renderTasks(state);

    const approvals = pendingApprovals(state);
    el("approvals").innerHTML = approvals
      .map(
        (a) =>
          `<li data-approval="${a.approvalId}">` +
          `<code>${a.command}</code> ` +
          `<button data-act="approve">approve</button> ` +
          `<button data-act="edit">edit</button> ` +
          `<button data-act="reject">reject</button></li>`,
      )
      .join("");

    try {
      const graph = await client.graph(ENGAGEMENT_ID);
      el("graph").innerHTML = renderGraphSvg(graph);
    } catch {
      // graph snapshot not available yet
    }
  };

  el("approvals").addEventListener("click", (ev) => {
    const button = ev.target as HTMLElement;
    const act = button.dataset?.act;
    const item = button.closest("[data-approval]") as HTMLElement | null;
    if (!act || !item) return;
    const approvalId = item.dataset.approval as string;
    let command: string | undefined;
    if (act === "edit") {
      command = window.prompt("replacement command") ?? undefined;
      if (!command) return;
    }
    void client.decide(
      ENGAGEMENT_ID,
      approvalId,
      act as "approve" | "edit" | "reject",
      command,
    );
  });

  (el("manual-form") as HTMLFormElement).addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = el("manual-command") as HTMLInputElement;
    if (input.value) {
      void client.submitManual(ENGAGEMENT_ID, input.value);
      input.value = "";
    }
  });

  const stop = pollEvents(client, ENGAGEMENT_ID, (page) => {
    state = reduceEvents(page.events, state);
    void redraw();
  });
  void redraw();
  return stop;
}
