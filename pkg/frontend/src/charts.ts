/** SVG chart builders. Pure string generators so they test without a DOM. */

import type { PosteriorView } from "./types.js";

const GLUCOSE_HI = 180;
const GLUCOSE_LO = 70;
const GLUCOSE_SEVERE = 54;

export const COLORS = {
  inRange: "#2e7d32",
  above: "#f9a825",
  below: "#c62828",
  trace: "#37474f",
  band: "#90caf9",
  median: "#1565c0",
  safe: "#c8e6c9",
  marker: "#6a1b9a",
};

interface Scale {
  (v: number): number;
}

function linear(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 || 1;
  return (v) => r0 + ((v - d0) / span) * (r1 - r0);
}

function poly(xs: number[], ys: number[], sx: Scale, sy: Scale): string {
  return xs.map((x, i) => `${sx(x).toFixed(2)},${sy(ys[i]).toFixed(2)}`).join(" ");
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

/** Contiguous true-runs of a boolean array as [first, last] index pairs. */
export function safeRuns(flags: boolean[]): [number, number][] {
  const runs: [number, number][] = [];
  let start: number | null = null;
  flags.forEach((flag, i) => {
    if (flag && start === null) start = i;
    if (!flag && start !== null) {
      runs.push([start, i - 1]);
      start = null;
    }
  });
  if (start !== null) runs.push([start, flags.length - 1]);
  return runs;
}

/** Glucose time series with the 70/180 target lines and the 54 severe line. */
export function glucoseTrace(
  t: number[],
  glucose: number[],
  width = 860,
  height = 240,
): string {
  const pad = 34;
  const tMax = t.length ? Math.max(...t) : 1;
  const sx = linear(0, Math.max(tMax, 1), pad, width - 8);
  const sy = linear(40, 400, height - 20, 8);
  const guides = [
    { y: GLUCOSE_HI, color: COLORS.above, dash: "4 3", label: "180" },
    { y: GLUCOSE_LO, color: COLORS.below, dash: "4 3", label: "70" },
    { y: GLUCOSE_SEVERE, color: COLORS.below, dash: "1 3", label: "54" },
  ]
    .map(
      (g) =>
        `<line x1="${pad}" y1="${sy(g.y).toFixed(2)}" x2="${width - 8}" ` +
        `y2="${sy(g.y).toFixed(2)}" stroke="${g.color}" stroke-dasharray="${g.dash}"/>` +
        `<text x="2" y="${(sy(g.y) + 4).toFixed(2)}" class="axis">${g.label}</text>`,
    )
    .join("");
  const line =
    t.length > 1
      ? `<polyline fill="none" stroke="${COLORS.trace}" stroke-width="1.2" ` +
        `points="${poly(t, glucose, sx, sy)}"/>`
      : "";
  const dots = t
    .slice(-1)
    .map(
      (tt, i) =>
        `<circle cx="${sx(tt).toFixed(2)}" cy="${sy(glucose[glucose.length - 1 + i]).toFixed(2)}" r="3" fill="${COLORS.median}"/>`,
    )
    .join("");
  return (
    `<svg viewBox="0 0 ${width} ${height}" class="chart glucose-trace">` +
    guides +
    line +
    dots +
    `</svg>`
  );
}

/** Dose-axis diagnostics: reward belief, constraint bound with safe shading,
 * barrier objective, and the recommended dose marker. */
export function dosePanel(
  view: PosteriorView,
  recommendedDose: number | null,
  width = 860,
  height = 330,
): string {
  const pad = 44;
  const doses = view.doses;
  const sx = linear(doses[0], doses[doses.length - 1], pad, width - 8);
  const lane = (height - 30) / 3;

  // lane 1: reward mean with +-1 std envelope
  const lo = view.reward_mean.map((m, i) => m - view.reward_std[i]);
  const hi = view.reward_mean.map((m, i) => m + view.reward_std[i]);
  const rMin = Math.min(...lo);
  const rMax = Math.max(...hi);
  const sy1 = linear(rMin, rMax, lane - 4, 6);
  const envelope =
    `<polygon fill="${COLORS.band}" opacity="0.55" points="` +
    poly(doses, hi, sx, sy1) +
    " " +
    [...doses].reverse().map((d, i) => `${sx(d).toFixed(2)},${sy1(lo[doses.length - 1 - i]).toFixed(2)}`).join(" ") +
    `"/>`;
  const meanLine = `<polyline fill="none" stroke="${COLORS.median}" stroke-width="1.4" points="${poly(doses, view.reward_mean, sx, sy1)}"/>`;

  // lane 2: constraint LCB, zero line, safe-region shading
  const cMin = Math.min(...view.constraint_lcb, 0);
  const cMax = Math.max(...view.constraint_lcb, 1);
  const sy2 = linear(cMin, cMax, 2 * lane - 4, lane + 6);
  const shading = safeRuns(view.safe)
    .map(([a, b]) => {
      const x0 = sx(doses[a]);
      const x1 = sx(doses[b]);
      return (
        `<rect class="safe-region" data-from="${a}" data-to="${b}" ` +
        `x="${x0.toFixed(2)}" y="${(lane + 4).toFixed(2)}" ` +
        `width="${Math.max(x1 - x0, 1).toFixed(2)}" height="${(lane - 6).toFixed(2)}" ` +
        `fill="${COLORS.safe}" opacity="0.8"/>`
      );
    })
    .join("");
  const zero = `<line x1="${pad}" y1="${sy2(0).toFixed(2)}" x2="${width - 8}" y2="${sy2(0).toFixed(2)}" stroke="${COLORS.below}" stroke-dasharray="4 3"/>`;
  const lcbLine = `<polyline fill="none" stroke="${COLORS.trace}" stroke-width="1.4" points="${poly(doses, view.constraint_lcb, sx, sy2)}"/>`;

  // lane 3: barrier objective where defined
  const finite = view.acquisition
    .map((v, i) => [v, i] as [number | null, number])
    .filter(([v]) => v !== null) as [number, number][];
  let acqLine = "";
  if (finite.length > 1) {
    const vals = finite.map(([v]) => v);
    const sy3 = linear(Math.min(...vals), Math.max(...vals), height - 10, 2 * lane + 8);
    acqLine = `<polyline fill="none" stroke="${COLORS.marker}" stroke-width="1.2" points="${finite
      .map(([v, i]) => `${sx(doses[i]).toFixed(2)},${sy3(v).toFixed(2)}`)
      .join(" ")}"/>`;
  }

  const marker =
    recommendedDose === null
      ? ""
      : `<line class="dose-marker" x1="${sx(recommendedDose).toFixed(2)}" y1="4" ` +
        `x2="${sx(recommendedDose).toFixed(2)}" y2="${height - 4}" ` +
        `stroke="${COLORS.marker}" stroke-width="1.6"/>`;
  const labels =
    `<text x="2" y="12" class="axis">reward belief</text>` +
    `<text x="2" y="${(lane + 16).toFixed(2)}" class="axis">constraint LCB</text>` +
    `<text x="2" y="${(2 * lane + 18).toFixed(2)}" class="axis">objective</text>`;
  return (
    `<svg viewBox="0 0 ${width} ${height}" class="chart dose-panel" ` +
    `data-category="${esc(view.category)}" data-fallback="${view.fallback}">` +
    shading + envelope + meanLine + zero + lcbLine + acqLine + marker + labels +
    `</svg>`
  );
}

/** Daily stacked in/above/below-range bars, colored by outcome. */
export function rangeBars(
  daily: { day: number; tir: number; tar: number; tbr: number }[],
  width = 860,
  height = 200,
): string {
  const pad = 34;
  const bw = (width - pad - 10) / Math.max(daily.length, 1);
  const sy = linear(0, 100, height - 16, 6);
  const bars = daily
    .map((d, i) => {
      const x = pad + i * bw;
      const segments = [
        { v: d.tir, color: COLORS.inRange, name: "tir" },
        { v: d.tar, color: COLORS.above, name: "tar" },
        { v: d.tbr, color: COLORS.below, name: "tbr" },
      ];
      let acc = 0;
      return segments
        .map((s) => {
          const y0 = sy(acc + s.v);
          const h = sy(acc) - y0;
          acc += s.v;
          return (
            `<rect class="bar-${s.name}" data-day="${d.day}" data-value="${s.v}" ` +
            `x="${x.toFixed(2)}" y="${y0.toFixed(2)}" width="${(bw * 0.82).toFixed(2)}" ` +
            `height="${Math.max(h, 0).toFixed(2)}" fill="${s.color}"/>`
          );
        })
        .join("");
    })
    .join("");
  return `<svg viewBox="0 0 ${width} ${height}" class="chart range-bars">${bars}</svg>`;
}

/** Cohort 5-95% band with median line. Throws if the band is out of order. */
export function quantileBandChart(
  band: { t_min: number; lo: number; median: number; hi: number }[],
  width = 860,
  height = 240,
): string {
  for (const row of band) {
    if (row.lo > row.hi) {
      throw new Error(`band inverted at t=${row.t_min}: ${row.lo} > ${row.hi}`);
    }
  }
  const pad = 34;
  const t = band.map((b) => b.t_min / 1440);
  const sx = linear(0, Math.max(...t, 1), pad, width - 8);
  const sy = linear(40, Math.max(400, ...band.map((b) => b.hi)), height - 16, 6);
  const area =
    `<polygon class="band" fill="${COLORS.band}" opacity="0.6" points="` +
    poly(t, band.map((b) => b.hi), sx, sy) +
    " " +
    [...t].reverse()
      .map((x, i) => `${sx(x).toFixed(2)},${sy(band[band.length - 1 - i].lo).toFixed(2)}`)
      .join(" ") +
    `"/>`;
  const median = `<polyline fill="none" stroke="${COLORS.median}" stroke-width="1.2" points="${poly(t, band.map((b) => b.median), sx, sy)}"/>`;
  const guides = [GLUCOSE_HI, GLUCOSE_LO]
    .map(
      (y) =>
        `<line x1="${pad}" y1="${sy(y).toFixed(2)}" x2="${width - 8}" y2="${sy(y).toFixed(2)}" stroke="#999" stroke-dasharray="4 3"/>`,
    )
    .join("");
  return `<svg viewBox="0 0 ${width} ${height}" class="chart quantile-band">${area}${median}${guides}</svg>`;
}

/** Weekly median %TIR trend. */
export function weeklyTrend(
  weekly: { week: number; tir: number }[],
  width = 420,
  height = 180,
): string {
  const pad = 34;
  const sx = linear(1, Math.max(...weekly.map((w) => w.week), 2), pad, width - 12);
  const sy = linear(0, 100, height - 16, 8);
  const line = `<polyline fill="none" stroke="${COLORS.inRange}" stroke-width="2" points="${poly(
    weekly.map((w) => w.week),
    weekly.map((w) => w.tir),
    sx,
    sy,
  )}"/>`;
  const dots = weekly
    .map(
      (w) =>
        `<circle class="week-dot" data-week="${w.week}" data-tir="${w.tir}" ` +
        `cx="${sx(w.week).toFixed(2)}" cy="${sy(w.tir).toFixed(2)}" r="4" fill="${COLORS.inRange}"/>`,
    )
    .join("");
  return `<svg viewBox="0 0 ${width} ${height}" class="chart weekly-trend">${line}${dots}</svg>`;
}
