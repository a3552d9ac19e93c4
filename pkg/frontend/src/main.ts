// Browser entry point: binds the three tabs to the service API and keeps the
// contest dialog in sync by polling. Configuration is a single base URL
// (plus the bearer token) kept in localStorage.

import { ApiClient } from "./api.js";
import { ContestDialog } from "./contestDialog.js";
import {
  renderDialog,
  renderHeatmap,
  renderPrediction,
  renderTopEvidence,
} from "./insightView.js";
import {
  renderChannelToggles,
  renderFeatureChips,
  renderIntervalSelector,
  renderWaveform,
} from "./sessionSummary.js";
import {
  TABS,
  ViewState,
  initialState,
  selectWindow,
  setActiveTab,
  toggleChannel,
} from "./state.js";
import type { Tab } from "./state.js";
import { renderTrend } from "./trendView.js";
import type { ArgumentTypeName, RoleName } from "./types.js";

const POLL_MS = 2000;

function setting(key: string, fallback: string): string {
  return window.localStorage.getItem(key) ?? fallback;
}

class App {
  private readonly api: ApiClient;
  private state: ViewState;
  private dialog: ContestDialog | null = null;
  private pollTimer: number | null = null;
  private currentPredictionId: string | null = null;

  constructor(private readonly rootEl: HTMLElement) {
    const baseUrl = setting("congait_base_url", "http://127.0.0.1:8077");
    const token = setting("congait_token", "dev-clinician");
    const role = setting("congait_role", "clinician") as RoleName;
    this.api = new ApiClient(baseUrl, token);
    this.state = initialState(role);
    rootEl.addEventListener("click", (event) => this.onClick(event));
    rootEl.addEventListener("change", (event) => this.onChange(event));
  }

  async start(): Promise<void> {
    this.renderShell();
    const session = setting("congait_session", "");
    if (session) {
      this.state = { ...this.state, selectedSession: session };
      await this.showSessionSummary();
    }
  }

  private renderShell(): void {
    const tabs = TABS.map(
      (tab) =>
        `<button class="tab${tab === this.state.activeTab ? " active" : ""}" ` +
        `data-action="tab" data-tab="${tab}">${tab.replace("_", " ")}</button>`,
    ).join("");
    this.rootEl.innerHTML =
      `<nav class="tabs">${tabs}</nav>` +
      `<main id="tab-body"><p class="notice">pick a session via localStorage ` +
      `key <code>congait_session</code></p></main>`;
  }

  private body(): HTMLElement {
    return this.rootEl.querySelector("#tab-body") as HTMLElement;
  }

  private async onClick(event: Event): Promise<void> {
    const target = (event.target as HTMLElement).closest("[data-action]");
    if (!(target instanceof HTMLElement)) return;
    const action = target.dataset["action"];
    if (action === "tab") {
      this.state = setActiveTab(this.state, target.dataset["tab"] as Tab);
      await this.showActiveTab();
    } else if (action === "select-window") {
      this.state = selectWindow(this.state, Number(target.dataset["window"]));
      await this.showSessionSummary();
    } else if (action === "submit-contest" && this.dialog) {
      const dialogEl = target.closest(".dialog") as HTMLElement;
      const note = (dialogEl.querySelector("[data-role=note]") as HTMLTextAreaElement).value;
      const picked = dialogEl.querySelector(
        "input[name=argument_type]:checked",
      ) as HTMLInputElement | null;
      await this.dialogCall(() =>
        this.dialog!.open((picked?.value ?? "") as ArgumentTypeName, note));
    } else if (action === "accept" && this.dialog) {
      await this.dialogCall(() => this.dialog!.accept());
    } else if (action === "recontest" && this.dialog) {
      const note = (
        this.rootEl.querySelector("[data-role=recontest-note]") as HTMLTextAreaElement
      ).value;
      await this.dialogCall(() => this.dialog!.recontest(note));
    } else if (action === "resolve" && this.dialog) {
      const verdict = (
        this.rootEl.querySelector("[data-role=verdict]") as HTMLSelectElement
      ).value;
      await this.dialogCall(() => this.dialog!.resolve(verdict));
    } else if (action === "reload-case" && this.dialog) {
      await this.dialogCall(() => this.dialog!.refresh());
    }
  }

  private async onChange(event: Event): Promise<void> {
    const target = event.target as HTMLElement;
    if (target.dataset["action"] === "toggle-channel") {
      this.state = toggleChannel(this.state, target.dataset["channel"] ?? "");
      await this.showSessionSummary();
    }
  }

  private async dialogCall(call: () => Promise<void>): Promise<void> {
    try {
      await call();
    } catch (error) {
      if (this.dialog) {
        this.dialog.state = {
          ...this.dialog.state,
          validationError: error instanceof Error ? error.message : String(error),
        };
      }
    }
    this.renderDialogInto();
  }

  private async showActiveTab(): Promise<void> {
    if (this.state.activeTab === "session_summary") await this.showSessionSummary();
    else if (this.state.activeTab === "treatment_trend") await this.showTrend();
    else await this.showInsight();
  }

  private async showSessionSummary(): Promise<void> {
    const sessionId = this.state.selectedSession;
    if (!sessionId) return;
    try {
      const features = await this.api.sessionFeatures(sessionId);
      const windowPayload = await this.api.window(sessionId, this.state.selectedWindow);
      this.body().innerHTML =
        renderIntervalSelector(features.window_count, this.state.selectedWindow) +
        renderFeatureChips(features, this.state.selectedWindow) +
        renderChannelToggles(this.state.channelToggles) +
        renderWaveform(windowPayload, this.state.channelToggles);
    } catch (error) {
      this.body().innerHTML =
        `<p class="error">failed to load session: ${String(error)} ` +
        `<button data-action="tab" data-tab="session_summary">retry</button></p>`;
    }
  }

  private async showTrend(): Promise<void> {
    const patient = setting("congait_patient", "");
    if (!patient) {
      this.body().innerHTML = `<p class="notice">set localStorage key ` +
        `<code>congait_patient</code></p>`;
      return;
    }
    try {
      this.body().innerHTML = renderTrend(await this.api.trend(patient, 3));
    } catch (error) {
      this.body().innerHTML =
        `<p class="error">failed to load trend: ${String(error)} ` +
        `<button data-action="tab" data-tab="treatment_trend">retry</button></p>`;
    }
  }

  private async showInsight(): Promise<void> {
    const sessionId = this.state.selectedSession;
    if (!sessionId) return;
    const run = await this.api.run(sessionId);
    const pair = run.pairs[this.state.selectedWindow] ?? run.pairs[0];
    if (!pair) {
      this.body().innerHTML = `<p class="notice">session has no full windows</p>`;
      return;
    }
    this.currentPredictionId = pair.prediction_id;
    const prediction = await this.api.prediction(pair.prediction_id);
    const relevance = await this.api.relevance(pair.prediction_id, true);
    this.dialog = new ContestDialog(this.api, pair.prediction_id, this.state.role);
    this.body().innerHTML =
      renderPrediction(prediction) +
      renderTopEvidence(relevance) +
      renderHeatmap(relevance) +
      `<section id="dialog-host">${renderDialog(this.dialog)}</section>`;
    this.startPolling();
  }

  private renderDialogInto(): void {
    const host = this.rootEl.querySelector("#dialog-host");
    if (host && this.dialog) host.innerHTML = renderDialog(this.dialog);
  }

  private startPolling(): void {
    if (this.pollTimer !== null) window.clearInterval(this.pollTimer);
    this.pollTimer = window.setInterval(async () => {
      if (!this.dialog || this.dialog.state.phase.kind === "picker") return;
      await this.dialog.refresh().catch(() => undefined);
      this.renderDialogInto();
    }, POLL_MS);
  }
}

const root = document.getElementById("app");
if (root) {
  void new App(root).start();
}
