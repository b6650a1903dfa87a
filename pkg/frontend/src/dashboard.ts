/** Validation dashboard: run the exam, read the verdict, and act on it.
 *
 * Renders the service's validation report verbatim: per-side deltas, exam
 * vs reference accuracy, risk, and the recommended tightening. A Reject
 * verdict gets a one-click recalibration with tightened floors; an
 * InsufficientEvidence verdict opens the spot-check wizard.
 */

import { ApiClient, ApiError } from "./api.js";
import { banner, clear, el, fmt, fmtPct, fmtSigned, statusLabel, verdictLabel } from "./render.js";
import type {
  GradeValue,
  SessionView,
  SpotCheckPlan,
  SpotCheckSide,
  SpotCheckSideResult,
  ValidationReport,
} from "./types.js";

/** Re-runs POST /calibrations with the floors raised by `tightening`.
 * Wired to the explorer, which holds the dataset; the dashboard itself
 * never recomputes anything. */
export type RecalibrateFn = (tightening: number) => Promise<unknown>;

export class ValidationDashboard {
  private readonly api: ApiClient;
  private readonly root: HTMLElement;
  private readonly recalibrate: RecalibrateFn | null;

  sessionId: string;
  view: SessionView | null = null;
  report: ValidationReport | null = null;
  lastError: ApiError | null = null;
  margin = 0.0;
  nMin = 5;
  confidence = 0.9;
  /** Record ids audited from this tab; the plan does not shrink server-side. */
  private spotGraded = new Set<string>();

  constructor(
    api: ApiClient,
    root: HTMLElement,
    sessionId: string,
    recalibrate: RecalibrateFn | null = null,
  ) {
    this.api = api;
    this.root = root;
    this.sessionId = sessionId;
    this.recalibrate = recalibrate;
  }

  async refresh(): Promise<void> {
    try {
      this.view = await this.api.getSession(this.sessionId);
      // a report from a previous validate call survives a plain refresh
      this.report = this.view.validation ?? this.report;
      this.lastError = null;
    } catch (err) {
      if (!(err instanceof ApiError)) throw err;
      this.lastError = err;
    }
    this.render();
  }

  async runValidation(): Promise<void> {
    await this.mutate(async () => {
      const response = await this.api.validate(this.sessionId, this.margin, this.nMin);
      this.report = response.report;
    });
  }

  async planSpotCheck(): Promise<void> {
    await this.mutate(() => this.api.planSpotCheck(this.sessionId, this.confidence));
  }

  async submitSpotGrade(recordId: string, grade: GradeValue): Promise<void> {
    await this.mutate(async () => {
      await this.api.submitSpotCheckGrade(this.sessionId, recordId, grade);
      this.spotGraded.add(recordId);
    });
  }

  /** Run a mutation, then repaint from the service; the mutation's own
   * failure must outlive the (usually successful) refresh. */
  private async mutate(action: () => Promise<unknown>): Promise<void> {
    let failure: ApiError | null = null;
    try {
      await action();
    } catch (err) {
      if (!(err instanceof ApiError)) throw err;
      failure = err;
    }
    await this.refresh();
    if (failure) {
      this.lastError = failure;
      this.render();
    }
  }

  async recalibrateTightened(): Promise<void> {
    if (!this.recalibrate || !this.report) return;
    await this.recalibrate(this.report.recommended_tightening);
  }

  render(): void {
    clear(this.root);
    if (this.lastError) {
      const retry = el("button", { id: "dash-retry", type: "button" }, ["Retry"]);
      retry.addEventListener("click", () => void this.refresh());
      this.root.append(banner("error", this.lastError.message), retry);
    }
    const view = this.view;
    if (!view) {
      this.root.append(banner("info", "Loading session…"));
      return;
    }

    this.root.append(
      el("div", { id: "dash-status", class: `status status-${view.status}` }, [
        statusLabel(view.status),
      ]),
    );
    this.root.append(this.validationControls(view));

    const report = this.report;
    if (!report) {
      this.root.append(banner("info", "No validation has been run yet."));
      return;
    }
    this.root.append(this.reportSection(report));
    if (report.verdict === "reject") {
      this.root.append(this.rejectAction(report));
    }
    if (report.verdict === "insufficient_evidence") {
      this.root.append(this.spotCheckSection(view));
    }
  }

  private validationControls(view: SessionView): HTMLElement {
    const marginInput = el("input", {
      id: "dash-margin",
      type: "number",
      min: "0",
      step: "0.05",
      value: String(this.margin),
    });
    marginInput.addEventListener("change", () => {
      this.margin = Number(marginInput.value);
    });
    const nMinInput = el("input", {
      id: "dash-n-min",
      type: "number",
      min: "1",
      step: "1",
      value: String(this.nMin),
    });
    nMinInput.addEventListener("change", () => {
      this.nMin = Number(nMinInput.value);
    });
    const run = el("button", { id: "dash-validate", type: "button" }, ["Run validation"]);
    run.addEventListener("click", () => void this.runValidation());
    if (view.status === "open") {
      run.disabled = true;
      run.title = "The deferred queue must be drained first.";
    }
    return el("div", { class: "dash-controls" }, [
      el("label", { for: "dash-margin" }, ["Margin"]),
      marginInput,
      el("label", { for: "dash-n-min" }, ["Min overlap n"]),
      nMinInput,
      run,
    ]);
  }

  private reportSection(report: ValidationReport): HTMLElement {
    const risk = report.risk;
    const section = el("div", { id: "dash-report", class: "report" }, [
      el("div", { id: "dash-verdict", class: `verdict verdict-${report.verdict}` }, [
        verdictLabel(report.verdict),
      ]),
      el("dl", { class: "readout" }, [
        el("dt", {}, ["Δ incorrect side"]),
        el("dd", { id: "dash-delta-incorrect" }, [fmtSigned(report.delta_incorrect)]),
        el("dt", {}, ["Δ correct side"]),
        el("dd", { id: "dash-delta-correct" }, [fmtSigned(report.delta_correct)]),
        el("dt", {}, ["Exam accuracy (i / c)"]),
        el("dd", { id: "dash-exam-accuracy" }, [
          `${fmt(report.exam_accuracy.incorrect)} / ${fmt(report.exam_accuracy.correct)}`,
        ]),
        el("dt", {}, ["Reference accuracy (i / c)"]),
        el("dd", { id: "dash-reference-accuracy" }, [
          `${fmt(report.reference_accuracy.incorrect)} / ${fmt(report.reference_accuracy.correct)}`,
        ]),
        el("dt", {}, ["Overlap (i / c)"]),
        el("dd", { id: "dash-overlap" }, [
          `${report.n_diff_incorrect} / ${report.n_diff_correct}`,
        ]),
        el("dt", {}, ["Margin used"]),
        el("dd", { id: "dash-margin-used" }, [fmt(report.margin)]),
        el("dt", {}, ["Risk z (i / c)"]),
        el("dd", { id: "dash-risk-z" }, [
          `${fmt(risk.incorrect)} / ${fmt(risk.correct)}`,
        ]),
        el("dt", {}, [`Violation probability (${risk.method})`]),
        el("dd", { id: "dash-risk" }, [
          risk.violation_probability === null
            ? "–"
            : risk.violation_probability.toExponential(2),
        ]),
        el("dt", {}, ["Recommended tightening"]),
        el("dd", { id: "dash-tightening" }, [fmt(report.recommended_tightening)]),
      ]),
    ]);
    return section;
  }

  private rejectAction(report: ValidationReport): HTMLElement {
    const button = el(
      "button",
      { id: "dash-recalibrate", type: "button", class: "primary" },
      ["Recalibrate with tightened constraints"],
    );
    if (this.recalibrate) {
      button.addEventListener("click", () => void this.recalibrateTightened());
    } else {
      button.disabled = true;
      button.title = "Load the calibration dataset in the explorer first.";
    }
    return el("div", { id: "dash-reject-action", class: "reject-action" }, [
      el("strong", {}, [
        `Rejected. Tighten the accuracy floors by ${fmt(report.recommended_tightening)} ` +
          "and recalibrate.",
      ]),
      button,
    ]);
  }

  private spotCheckSection(view: SessionView): HTMLElement {
    const section = el("div", { id: "dash-spot", class: "spot-check" }, [
      el("h3", {}, ["Spot check"]),
    ]);
    const plan = view.spot_check.plan;
    if (!plan) {
      const confidenceInput = el("input", {
        id: "spot-confidence",
        type: "number",
        min: "0.05",
        max: "0.999",
        step: "0.05",
        value: String(this.confidence),
      });
      confidenceInput.addEventListener("change", () => {
        this.confidence = Number(confidenceInput.value);
      });
      const planButton = el("button", { id: "spot-plan", type: "button" }, [
        "Plan spot check",
      ]);
      planButton.addEventListener("click", () => void this.planSpotCheck());
      section.append(
        banner("warn", "Not enough overlap to judge the calibration. Audit a sample of the auto-graded buckets."),
        el("label", { for: "spot-confidence" }, ["Confidence"]),
        confidenceInput,
        planButton,
      );
      return section;
    }

    section.append(this.planSummary(plan));
    const result = view.spot_check.result;
    if (result) {
      section.append(
        banner(result.passed ? "info" : "error", result.passed ? "Spot check passed." : "Spot check failed."),
        this.sideResult("incorrect", result.incorrect),
        this.sideResult("correct", result.correct),
      );
      return section;
    }

    const pending = [...plan.incorrect.record_ids, ...plan.correct.record_ids].filter(
      (id) => !this.spotGraded.has(id),
    );
    const list = el("ul", { id: "spot-pending", class: "spot-pending" });
    for (const recordId of pending) {
      const correct = el("button", { type: "button", "data-grade": "correct" }, ["Correct"]);
      const incorrect = el("button", { type: "button", "data-grade": "incorrect" }, [
        "Incorrect",
      ]);
      correct.addEventListener("click", () => void this.submitSpotGrade(recordId, "correct"));
      incorrect.addEventListener("click", () =>
        void this.submitSpotGrade(recordId, "incorrect"),
      );
      list.append(el("li", { "data-record-id": recordId }, [recordId + " ", correct, incorrect]));
    }
    section.append(list);
    return section;
  }

  private planSummary(plan: SpotCheckPlan): HTMLElement {
    const side = (label: string, s: SpotCheckSide) =>
      el("li", {}, [
        `${label}: audit ${s.n_planned} of ${s.bucket_size}` +
          (s.whole_bucket ? " (whole bucket)" : "") +
          `, achievable confidence ${fmtPct(s.achievable_confidence)}`,
      ]);
    return el("ul", { id: "spot-plan-summary" }, [
      side("Auto-incorrect", plan.incorrect),
      side("Auto-correct", plan.correct),
    ]);
  }

  private sideResult(label: string, result: SpotCheckSideResult): HTMLElement {
    return el("div", { id: `spot-result-${label}`, class: "spot-result" }, [
      `${label}: accuracy ${fmt(result.accuracy)} over ${result.n_checked} checked ` +
        `(${result.n_matching} matching), confidence ${fmtPct(result.achieved_confidence)}, ` +
        (result.passed ? "passed" : "failed"),
    ]);
  }
}
