/** Trial report viewer: render a parsed plot-data file. */

import { quantileBandChart, rangeBars, weeklyTrend } from "./charts.js";
import { assertBandOrdered, parsePlotData, PlotData, PlotDataError } from "./plotdata.js";

export function renderReport(data: PlotData): string {
  assertBandOrdered(data);
  const band = quantileBandChart(data.band);
  const bars = rangeBars(data.daily);
  const trend = data.weekly.length
    ? weeklyTrend(data.weekly)
    : `<div class="empty">no weekly rows</div>`;
  return (
    `<section><h3>cohort glucose, 5-95% band</h3>${band}</section>` +
    `<section><h3>daily time in / above / below range</h3>${bars}</section>` +
    `<section><h3>weekly median %TIR</h3>${trend}</section>`
  );
}

export function renderReportFromText(text: string): string {
  try {
    return renderReport(parsePlotData(text));
  } catch (error) {
    if (error instanceof PlotDataError) {
      return `<div class="banner error">plot data rejected: ${error.message}</div>`;
    }
    throw error;
  }
}
