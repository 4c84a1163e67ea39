import { describe, expect, it } from "vitest";

import {
  COLOR_COMPLETED,
  COLOR_CURRENT,
  COLOR_PENDING,
  layerByDepth,
  layoutGraph,
  renderGraphSvg,
} from "../src/render.js";
import type { GraphSnapshot, GraphTask } from "../src/types.js";

function t(
  seq: number,
  prerequisites: number[] = [],
  completed = false,
): GraphTask {
  return {
    seq,
    directive: `task ${seq}`,
    op_type: "shell",
    prerequisites,
    command: null,
    outcome: null,
    completed,
    succeeded: completed,
  };
}

describe("layered DAG layout", () => {
  it("places each task one column past its deepest prerequisite", () => {
    // diamond: 1 -> {2, 3} -> 4, plus a long chain 1 -> 2 -> 5 -> 4
    const tasks = [t(1), t(2, [1]), t(3, [1]), t(5, [2]), t(4, [3, 5])];
    const depths = layerByDepth(tasks);
    expect(depths.get(1)).toBe(0);
    expect(depths.get(2)).toBe(1);
    expect(depths.get(3)).toBe(1);
    expect(depths.get(5)).toBe(2);
    expect(depths.get(4)).toBe(3); // longest path wins over 3's depth
  });

  it("stacks same-depth tasks into rows", () => {
    const layout = layoutGraph({
      tasks: [t(1), t(2, [1]), t(3, [1])],
      current_seq: null,
    });
    const column1 = layout.filter((n) => n.depth === 1);
    expect(column1.map((n) => n.row).sort()).toEqual([0, 1]);
    expect(column1[0].x).toBe(column1[1].x);
    expect(column1[0].y).not.toBe(column1[1].y);
  });

  it("colors by status: completed, current, pending", () => {
    const layout = layoutGraph({
      tasks: [t(1, [], true), t(2, [1]), t(3, [1])],
      current_seq: 2,
    });
    const bySeq = new Map(layout.map((n) => [n.seq, n.color]));
    expect(bySeq.get(1)).toBe(COLOR_COMPLETED);
    expect(bySeq.get(2)).toBe(COLOR_CURRENT);
    expect(bySeq.get(3)).toBe(COLOR_PENDING);
  });
});

describe("SVG rendering", () => {
  it("emits one node per task and one edge per prerequisite", () => {
    const snapshot: GraphSnapshot = {
      tasks: [t(1, [], true), t(2, [1]), t(3, [1, 2])],
      current_seq: 2,
    };
    const svg = renderGraphSvg(snapshot);
    expect(svg.match(/<rect /g)).toHaveLength(3);
    expect(svg.match(/<line /g)).toHaveLength(3);
    expect(svg).toContain(`data-seq="1"`);
    expect(svg).toContain(COLOR_CURRENT);
  });

  it("escapes directive text", () => {
    const snapshot: GraphSnapshot = {
      tasks: [
        {
          ...t(1),
          directive: `<script>"x" & y</script>`,
        },
      ],
      current_seq: null,
    };
    const svg = renderGraphSvg(snapshot);
    expect(svg).not.toContain("<script>");
    expect(svg).toContain("&lt;script&gt;");
  });

  it("renders an empty graph without errors", () => {
    const svg = renderGraphSvg({ tasks: [], current_seq: null });
    expect(svg).toContain("<svg");
  });
});
