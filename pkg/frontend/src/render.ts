/** Layered DAG rendering of the task graph as an SVG string.
 * Pure functions only: layout and markup are unit-testable without a DOM. */

import type { GraphSnapshot, GraphTask } from "./types.js";

export const COLOR_COMPLETED = "#1d3557";
export const COLOR_CURRENT = "#f4a261";
export const COLOR_PENDING = "#a8dadc";
export const COLOR_EDGE = "#6b7280";

const NODE_W = 180;
const NODE_H = 46;
const GAP_X = 70;
const GAP_Y = 24;

export interface NodeLayout {
  seq: number;
  depth: number; // longest prerequisite path from a root
  row: number; // position within the depth column
  x: number;
  y: number;
  color: string;
  label: string;
}

export function nodeColor(task: GraphTask, currentSeq: number | null): string {
  if (task.seq === currentSeq) return COLOR_CURRENT;
  if (task.completed) return COLOR_COMPLETED;
  return COLOR_PENDING;
}

/** Longest-path depth per task; prerequisites always sit in earlier
 * columns so every edge points left-to-right. */
export function layerByDepth(tasks: GraphTask[]): Map<number, number> {
  const bySeq = new Map(tasks.map((t) => [t.seq, t]));
  const depths = new Map<number, number>();
  const visiting = new Set<number>();

  const depthOf = (seq: number): number => {
    const known = depths.get(seq);
    if (known !== undefined) return known;
    if (visiting.has(seq)) return 0; // defensive: server graphs are acyclic
    visiting.add(seq);
    const task = bySeq.get(seq);
    let depth = 0;
    for (const p of task?.prerequisites ?? []) {
      if (bySeq.has(p)) depth = Math.max(depth, depthOf(p) + 1);
    }
    visiting.delete(seq);
    depths.set(seq, depth);
    return depth;
  };

  for (const task of tasks) depthOf(task.seq);
  return depths;
}

export function layoutGraph(snapshot: GraphSnapshot): NodeLayout[] {
  const depths = layerByDepth(snapshot.tasks);
  const rows = new Map<number, number>();
  const nodes: NodeLayout[] = [];
  for (const task of [...snapshot.tasks].sort((a, b) => a.seq - b.seq)) {
    const depth = depths.get(task.seq) ?? 0;
    const row = rows.get(depth) ?? 0;
    rows.set(depth, row + 1);
    nodes.push({
      seq: task.seq,
      depth,
      row,
      x: depth * (NODE_W + GAP_X),
      y: row * (NODE_H + GAP_Y),
      color: nodeColor(task, snapshot.current_seq),
      label: `${task.seq}. ${task.directive}`,
    });
  }
  return nodes;
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderGraphSvg(snapshot: GraphSnapshot): string {
  const nodes = layoutGraph(snapshot);
  const bySeq = new Map(nodes.map((n) => [n.seq, n]));
  const width =
    Math.max(0, ...nodes.map((n) => n.x + NODE_W)) + GAP_X;
  const height =
    Math.max(0, ...nodes.map((n) => n.y + NODE_H)) + GAP_Y;

  const edges: string[] = [];
  for (const task of snapshot.tasks) {
    const to = bySeq.get(task.seq);
    if (!to) continue;
    for (const p of task.prerequisites) {
      const from = bySeq.get(p);
      if (!from) continue;
      edges.push(
        `<line x1="${from.x + NODE_W}" y1="${from.y + NODE_H / 2}" ` +
          `x2="${to.x}" y2="${to.y + NODE_H / 2}" ` +
          `stroke="${COLOR_EDGE}" stroke-width="1.5" />`,
      );
    }
  }

  const boxes = nodes.map(
    (n) =>
      `<g data-seq="${n.seq}">` +
      `<rect x="${n.x}" y="${n.y}" width="${NODE_W}" height="${NODE_H}" ` +
      `rx="6" fill="${n.color}" />` +
      `<text x="${n.x + 8}" y="${n.y + NODE_H / 2 + 4}" ` +
      `font-size="12" fill="#fff">${escapeXml(n.label.slice(0, 28))}</text>` +
      `</g>`,
  );

  return (
    `<svg xmlns="http://www.w3.org/2000/svg" ` +
    `width="${width}" height="${height}">` +
    edges.join("") +
    boxes.join("") +
    `</svg>`
  );
}
