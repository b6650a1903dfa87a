/** App shell: connection panel, session picker, tab switching, and the poll
 * loop that keeps the queue and dashboard in step with the service. */

import { ApiClient } from "./api.js";
import { ValidationDashboard } from "./dashboard.js";
import { ThresholdExplorer } from "./explorer.js";
import { QueueScreen } from "./queue.js";

const els = {
  connectForm: document.getElementById("connectForm") as HTMLFormElement,
  baseUrl: document.getElementById("baseUrl") as HTMLInputElement,
  token: document.getElementById("token") as HTMLInputElement,
  pollInterval: document.getElementById("pollInterval") as HTMLInputElement,
  connStatus: document.getElementById("connStatus") as HTMLElement,
  tabButtons: Array.from(document.querySelectorAll<HTMLButtonElement>(".tab-btn")),
  views: Array.from(document.querySelectorAll<HTMLElement>(".view")),
  sessionSelect: document.getElementById("sessionSelect") as HTMLSelectElement,
  refreshSessionsBtn: document.getElementById("refreshSessionsBtn") as HTMLButtonElement,
  queueView: document.getElementById("queueView") as HTMLElement,
  dashboardView: document.getElementById("dashboardView") as HTMLElement,
  explorerRoot: document.getElementById("explorerRoot") as HTMLElement,
  datasetText: document.getElementById("datasetText") as HTMLTextAreaElement,
  loadDatasetBtn: document.getElementById("loadDatasetBtn") as HTMLButtonElement,
  datasetStatus: document.getElementById("datasetStatus") as HTMLElement,
};

const settingsKey = "selgrade_ui_settings_v1";

interface AppState {
  api: ApiClient | null;
  queue: QueueScreen | null;
  dashboard: ValidationDashboard | null;
  explorer: ThresholdExplorer | null;
  activeViewId: string;
  pollTimer: number | null;
}

const state: AppState = {
  api: null,
  queue: null,
  dashboard: null,
  explorer: null,
  activeViewId: "queueView",
  pollTimer: null,
};

function loadSettings(): void {
  try {
    const raw = window.localStorage.getItem(settingsKey);
    if (!raw) return;
    const saved = JSON.parse(raw);
    if (typeof saved.baseUrl === "string") els.baseUrl.value = saved.baseUrl;
    if (typeof saved.pollSeconds === "number") {
      els.pollInterval.value = String(saved.pollSeconds);
    }
  } catch {
    // stale or malformed settings are not worth a broken page
  }
}

function saveSettings(): void {
  window.localStorage.setItem(
    settingsKey,
    JSON.stringify({
      baseUrl: els.baseUrl.value.trim(),
      pollSeconds: Number(els.pollInterval.value) || 3,
    }),
  );
}

async function connect(): Promise<void> {
  const api = new ApiClient({
    baseUrl: els.baseUrl.value.trim(),
    token: els.token.value.trim() || undefined,
  });
  els.connStatus.textContent = "connecting…";
  els.connStatus.className = "conn-status";
  try {
    await api.health();
  } catch {
    els.connStatus.textContent = "unreachable";
    els.connStatus.className = "conn-status bad";
    return;
  }
  state.api = api;
  state.explorer = new ThresholdExplorer(api, els.explorerRoot);
  state.explorer.render();
  els.connStatus.textContent = "connected";
  els.connStatus.className = "conn-status ok";
  saveSettings();
  await refreshSessions();
}

async function refreshSessions(): Promise<void> {
  if (!state.api) return;
  const previous = els.sessionSelect.value;
  try {
    const listing = await state.api.listSessions();
    els.sessionSelect.innerHTML = "";
    for (const entry of listing.sessions) {
      const option = document.createElement("option");
      option.value = entry.session_id;
      option.textContent =
        `${entry.session_id.slice(0, 12)} — ${entry.status}, ` +
        `${entry.manual_remaining} to grade`;
      els.sessionSelect.append(option);
    }
    const ids = listing.sessions.map((entry) => entry.session_id);
    if (previous && ids.includes(previous)) {
      els.sessionSelect.value = previous;
    }
    if (els.sessionSelect.value) {
      selectSession(els.sessionSelect.value);
    }
  } catch {
    els.connStatus.textContent = "listing failed";
    els.connStatus.className = "conn-status bad";
  }
}

function selectSession(sessionId: string): void {
  if (!state.api) return;
  if (state.queue && state.queue.sessionId === sessionId) return;
  state.queue = new QueueScreen(state.api, els.queueView, sessionId);
  state.dashboard = new ValidationDashboard(
    state.api,
    els.dashboardView,
    sessionId,
    recalibrateTightened,
  );
  void state.queue.refresh();
  void state.dashboard.refresh();
  startPolling();
}

/** One-click follow-up on a Reject verdict: raise both floors by the
 * recommended amount and post a fresh calibration. The explorer holds the
 * dataset, so the action lands there. */
async function recalibrateTightened(tightening: number): Promise<void> {
  const explorer = state.explorer;
  if (!explorer) return;
  if (!explorer.items) {
    switchView("explorerView");
    els.datasetStatus.textContent = "Load the calibration dataset to recalibrate.";
    return;
  }
  await explorer.setConstraints(
    Math.min(1, explorer.cMinIncorrect + tightening),
    Math.min(1, explorer.cMinCorrect + tightening),
  );
  switchView("explorerView");
}

function startPolling(): void {
  if (state.pollTimer !== null) window.clearInterval(state.pollTimer);
  const seconds = Math.max(1, Number(els.pollInterval.value) || 3);
  state.pollTimer = window.setInterval(() => {
    // do not repaint under the user's cursor mid-edit
    const active = document.activeElement;
    const editing =
      active instanceof HTMLInputElement ||
      active instanceof HTMLTextAreaElement ||
      active instanceof HTMLSelectElement;
    if (editing) return;
    if (state.activeViewId === "queueView" && state.queue) {
      void state.queue.refresh();
    } else if (state.activeViewId === "dashboardView" && state.dashboard) {
      void state.dashboard.refresh();
    }
  }, seconds * 1000);
}

function switchView(viewId: string): void {
  state.activeViewId = viewId;
  for (const view of els.views) {
    view.hidden = view.id !== viewId;
  }
  for (const button of els.tabButtons) {
    button.classList.toggle("active", button.dataset.view === viewId);
  }
}

function loadDataset(): void {
  if (!state.explorer) {
    els.datasetStatus.textContent = "Connect to the service first.";
    return;
  }
  try {
    state.explorer.loadItemsFromText(els.datasetText.value);
  } catch (err) {
    els.datasetStatus.textContent = err instanceof Error ? err.message : String(err);
    return;
  }
  els.datasetStatus.textContent = `${state.explorer.items?.length ?? 0} records loaded.`;
  void state.explorer.recalibrate();
}

els.connectForm.addEventListener("submit", (event) => {
  event.preventDefault();
  void connect();
});
els.refreshSessionsBtn.addEventListener("click", () => void refreshSessions());
els.sessionSelect.addEventListener("change", () => {
  selectSession(els.sessionSelect.value);
});
for (const button of els.tabButtons) {
  button.addEventListener("click", () => {
    const viewId = button.dataset.view;
    if (viewId) switchView(viewId);
  });
}
els.loadDatasetBtn.addEventListener("click", loadDataset);
els.pollInterval.addEventListener("change", () => {
  saveSettings();
  if (state.pollTimer !== null) startPolling();
});

loadSettings();
void connect();
