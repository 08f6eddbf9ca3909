/** Page wiring: tabs, session controls, report upload. */

import { ApiError, GuidanceClient } from "./api.js";
import { renderDashboard } from "./dashboard.js";
import { renderReportFromText } from "./report.js";
import { SessionViewModel } from "./viewmodel.js";

const client = new GuidanceClient(
  (window as unknown as { DOSEGUIDE_BASE?: string }).DOSEGUIDE_BASE ??
    "http://127.0.0.1:8000",
);
const vm = new SessionViewModel(client);

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function numberValue(id: string): number | undefined {
  const el = document.getElementById(id) as HTMLInputElement | null;
  if (!el || el.value === "") return undefined;
  return Number(el.value);
}

async function guarded(action: () => Promise<void>): Promise<void> {
  vm.lastError = null;
  try {
    await action();
  } catch (error) {
    if (error instanceof ApiError) {
      vm.lastError = `${error.code}: ${error.message}`;
    } else {
      vm.lastError = String(error);
    }
  }
  paint();
}

function bindDashboard(): void {
  const root = $("dashboard");
  root.querySelector("#meal-form")?.addEventListener("submit", (e) => {
    e.preventDefault();
    const category = (root.querySelector("#meal-category") as HTMLSelectElement).value;
    void guarded(async () => {
      await vm.announceMeal(category, {
        cho_grams: numberValue("meal-grams"),
        time_min: numberValue("meal-time"),
      });
    });
  });
  root.querySelector("#cgm-form")?.addEventListener("submit", (e) => {
    e.preventDefault();
    const t = numberValue("cgm-time");
    const g = numberValue("cgm-value");
    if (t === undefined || g === undefined) return;
    void guarded(async () => {
      await vm.submitCgm([{ t_min: t, glucose_mgdl: g }]);
    });
  });
  root.querySelector("#advance-form")?.addEventListener("submit", (e) => {
    e.preventDefault();
    const minutes = numberValue("advance-minutes") ?? 300;
    void guarded(async () => {
      await vm.advance(minutes);
    });
  });
  root.querySelector("#close-episode")?.addEventListener("click", () => {
    void guarded(async () => {
      await vm.closeEpisode();
    });
  });
}

function paint(): void {
  $("dashboard").innerHTML = renderDashboard(vm);
  bindDashboard();
}

function bindTopControls(): void {
  $("new-session").addEventListener("click", () => {
    const mode = (document.getElementById("session-mode") as HTMLSelectElement)
      .value as "live" | "simulated";
    void guarded(async () => {
      await vm.create(mode, 5);
    });
  });
  $("plotdata-input").addEventListener("change", (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    void file.text().then((text) => {
      $("report").innerHTML = renderReportFromText(text);
    });
  });
  document.querySelectorAll("[data-tab]").forEach((button) => {
    button.addEventListener("click", () => {
      const tab = (button as HTMLElement).dataset.tab!;
      document
        .querySelectorAll(".tab-page")
        .forEach((page) => page.classList.toggle("hidden", page.id !== tab));
    });
  });
}

bindTopControls();
paint();
