/** Chart builders: shading runs, bar values, trace guides. */

import { describe, expect, it } from "vitest";

import { dosePanel, glucoseTrace, rangeBars, safeRuns, weeklyTrend } from "../src/charts.js";
import type { PosteriorView } from "../src/types.js";

function view(safe: boolean[]): PosteriorView {
  const n = safe.length;
  const ramp = Array.from({ length: n }, (_, i) => i / Math.max(n - 1, 1));
  return {
    category: "M",
    doses: ramp.map((r) => r * 20),
    reward_mean: ramp.map((r) => -200 + 50 * r),
    reward_std: ramp.map(() => 10),
    constraint_lcb: safe.map((s) => (s ? 5 : -5)),
    safe,
    acquisition: safe.map((s, i) => (s ? -150 + i : null)),
    fallback: !safe.some((s) => s),
    beta_sqrt: 2,
    safety_margin: 0,
  };
}

describe("safeRuns", () => {
  it("finds maximal runs", () => {
    expect(safeRuns([false, true, true, false, true])).toEqual([
      [1, 2],
      [4, 4],
    ]);
    expect(safeRuns([true, true])).toEqual([[0, 1]]);
    expect(safeRuns([false, false])).toEqual([]);
  });
});

describe("dosePanel", () => {
  it("emits one shaded rect per safe run with exact indices", () => {
    const flags = [false, true, true, true, false, false, true, false];
    const svg = dosePanel(view(flags), 5.0);
    const rects = [...svg.matchAll(/data-from="(\d+)" data-to="(\d+)"/g)].map(
      (m) => [Number(m[1]), Number(m[2])],
    );
    expect(rects).toEqual([
      [1, 3],
      [6, 6],
    ]);
    expect(svg).toContain("dose-marker");
  });

  it("marks an all-unsafe panel as fallback with no shading", () => {
    const svg = dosePanel(view([false, false, false]), null);
    expect(svg).toContain('data-fallback="true"');
    expect(svg).not.toContain("safe-region");
    expect(svg).not.toContain("dose-marker");
  });
});

describe("glucoseTrace", () => {
  it("draws the three clinical guide lines", () => {
    const svg = glucoseTrace([0, 5, 10], [120, 130, 125]);
    expect(svg).toContain(">180</text>");
    expect(svg).toContain(">70</text>");
    expect(svg).toContain(">54</text>");
  });
});

describe("rangeBars", () => {
  it("encodes the daily values as data attributes", () => {
    const svg = rangeBars([
      { day: 1, tir: 70, tar: 25, tbr: 5 },
      { day: 2, tir: 90, tar: 10, tbr: 0 },
    ]);
    expect(svg).toContain('class="bar-tir" data-day="1" data-value="70"');
    expect(svg).toContain('class="bar-tbr" data-day="2" data-value="0"');
  });
});

describe("weeklyTrend", () => {
  it("plots one dot per week", () => {
    const svg = weeklyTrend([
      { week: 1, tir: 70 },
      { week: 2, tir: 85 },
      { week: 3, tir: 92 },
    ]);
    expect([...svg.matchAll(/week-dot/g)]).toHaveLength(3);
  });
});
