/** Session dashboard rendering: pure HTML string from the view model. */

import { dosePanel, glucoseTrace } from "./charts.js";
import type { SessionViewModel } from "./viewmodel.js";

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderDoseReadout(vm: SessionViewModel): string {
  if (!vm.pendingEpisode || vm.currentDoseDisplay === null) {
    return `<div class="dose-readout idle">announce a meal to get a dose</div>`;
  }
  const fallback = vm.currentFallback
    ? `<span class="tag fallback">fallback</span>`
    : "";
  return (
    `<div class="dose-readout active">` +
    `<span class="dose-value" title="${esc(vm.currentDoseDisplay)} U">` +
    `${esc(vm.currentDoseDisplay)}</span> U ${fallback}` +
    `<button id="close-episode">close episode</button>` +
    `</div>`
  );
}

export function renderEpisodeTable(vm: SessionViewModel): string {
  const rows = vm
    .episodes()
    .map(({ row, doseDisplay }) => {
      const reward = row.reward_obs === null ? "pending" : row.reward_obs.toFixed(1);
      const constraint =
        row.constraint_obs === null ? "pending" : row.constraint_obs.toFixed(1);
      return (
        `<tr data-k="${row.k}"><td>${row.k}</td><td>${esc(row.category)}</td>` +
        `<td>${row.meal_time.toFixed(0)}</td><td>${row.cho_grams.toFixed(0)}</td>` +
        `<td class="dose-cell" title="${esc(doseDisplay)} U">${esc(doseDisplay)}</td>` +
        `<td>${row.fallback_used ? "yes" : ""}</td>` +
        `<td>${reward}</td><td>${constraint}</td><td>${esc(row.status)}</td></tr>`
      );
    })
    .join("");
  return (
    `<table class="episodes"><thead><tr><th>k</th><th>meal</th><th>t (min)</th>` +
    `<th>CHO (g)</th><th>dose (U)</th><th>fallback</th><th>reward</th>` +
    `<th>constraint</th><th>status</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderControls(vm: SessionViewModel): string {
  const categories = ["S", "M", "L", "XL"]
    .map((c) => `<option value="${c}">${c}</option>`)
    .join("");
  const mealForm =
    `<form id="meal-form" class="panel">` +
    `<label>meal <select id="meal-category">${categories}</select></label>` +
    `<label>grams <input id="meal-grams" type="number" min="1" placeholder="default"/></label>` +
    (vm.mode === "live"
      ? `<label>t (min) <input id="meal-time" type="number" min="0" required/></label>`
      : "") +
    `<button type="submit">announce meal</button></form>`;
  const feedForm =
    vm.mode === "live"
      ? `<form id="cgm-form" class="panel">` +
        `<label>t (min) <input id="cgm-time" type="number" min="0"/></label>` +
        `<label>glucose <input id="cgm-value" type="number" min="20" max="600"/></label>` +
        `<button type="submit">add CGM sample</button></form>`
      : `<form id="advance-form" class="panel">` +
        `<label>advance <input id="advance-minutes" type="number" value="300" min="1"/> min</label>` +
        `<button type="submit">advance time</button></form>`;
  return mealForm + feedForm;
}

export function renderDashboard(vm: SessionViewModel): string {
  if (!vm.sessionId) {
    return `<div class="empty">no session; create one above</div>`;
  }
  const cgm = vm.history?.cgm ?? { t_min: [], glucose_mgdl: [] };
  const trace = glucoseTrace(cgm.t_min, cgm.glucose_mgdl);
  const panel = vm.posterior
    ? dosePanel(
        vm.posterior,
        vm.currentDoseDisplay === null ? null : Number(vm.currentDoseDisplay),
      )
    : `<div class="empty">no posterior yet</div>`;
  const error = vm.lastError
    ? `<div class="banner error">${esc(vm.lastError)}</div>`
    : "";
  return (
    error +
    `<section><h2>session ${esc(vm.sessionId)} (${vm.mode})</h2>` +
    renderDoseReadout(vm) +
    renderControls(vm) +
    `</section>` +
    `<section><h3>glucose</h3>${trace}</section>` +
    `<section><h3>dose diagnostics</h3>${panel}</section>` +
    `<section><h3>episodes</h3>${renderEpisodeTable(vm)}</section>`
  );
}
