/** Grading queue screen: show the service's current queue head, take a
 * Correct/Incorrect call, advance.
 *
 * The displayed item is always the head of the last GET /queue response;
 * nothing is reordered or cached client-side. Submissions for an item
 * that is no longer pending (double-click, second tab) go through an
 * overwrite confirmation instead of silently re-grading.
 */

import { ApiClient, ApiError } from "./api.js";
import { banner, clear, el, fmt, statusLabel } from "./render.js";
import type { GradeValue, QueueEntry, SessionView } from "./types.js";

export type ConfirmFn = (message: string) => boolean | Promise<boolean>;

export class QueueScreen {
  private readonly api: ApiClient;
  private readonly root: HTMLElement;
  private readonly confirmOverwrite: ConfirmFn;

  sessionId: string;
  view: SessionView | null = null;
  head: QueueEntry | null = null;
  remaining = 0;
  lastError: ApiError | null = null;
  private gradedByMe = new Set<string>();
  private submitting = false;

  constructor(
    api: ApiClient,
    root: HTMLElement,
    sessionId: string,
    confirmOverwrite?: ConfirmFn,
  ) {
    this.api = api;
    this.root = root;
    this.sessionId = sessionId;
    this.confirmOverwrite =
      confirmOverwrite ?? ((message) => window.confirm(message));
  }

  async refresh(): Promise<void> {
    try {
      this.view = await this.api.getSession(this.sessionId);
      const queue = await this.api.getQueue(this.sessionId, 1);
      this.head = queue.queue[0] ?? null;
      this.remaining = queue.remaining;
      this.lastError = null;
    } catch (err) {
      if (!(err instanceof ApiError)) throw err;
      this.lastError = err;
    }
    this.render();
  }

  /** Submit a grade for the currently displayed head. */
  async submitCurrent(grade: GradeValue): Promise<void> {
    if (!this.head || this.submitting) return;
    await this.submit(this.head.record_id, grade);
  }

  async submit(recordId: string, grade: GradeValue): Promise<void> {
    if (this.gradedByMe.has(recordId)) {
      const proceed = await this.confirmOverwrite(
        `Record ${recordId} was already graded in this session. Overwrite the grade?`,
      );
      if (!proceed) return;
    }
    this.submitting = true;
    let failure: ApiError | null = null;
    try {
      await this.api.submitGrade(this.sessionId, recordId, grade);
      this.gradedByMe.add(recordId);
    } catch (err) {
      if (!(err instanceof ApiError)) throw err;
      failure = err;
    } finally {
      this.submitting = false;
    }
    // refresh repaints from the service; a submit failure must outlive it
    await this.refresh();
    if (failure) {
      this.lastError = failure;
      this.render();
    }
  }

  render(): void {
    clear(this.root);
    const view = this.view;
    if (this.lastError) {
      this.root.append(
        banner("error", `${this.lastError.status || "network"}: ${this.lastError.message}`),
      );
      const retry = el("button", { id: "queue-retry", type: "button" }, ["Retry"]);
      retry.addEventListener("click", () => void this.refresh());
      this.root.append(retry);
      if (!view) return;
    }
    if (!view) {
      this.root.append(banner("info", "Loading session…"));
      return;
    }

    const status = el(
      "div",
      { id: "queue-status", class: `status status-${view.status}` },
      [statusLabel(view.status)],
    );
    const summary = view.summary;
    const progress = el("div", { id: "queue-progress", class: "progress" }, [
      `${summary.manual_graded} of ${summary.n_deferred} deferred graded, ` +
        `${summary.manual_remaining} remaining. ` +
        `Auto: ${summary.n_auto_incorrect} incorrect, ${summary.n_auto_correct} correct.`,
    ]);
    this.root.append(status, progress);

    if (!this.head) {
      const message =
        view.status === "open"
          ? "No deferred items."
          : "Queue drained. The session is ready to validate.";
      this.root.append(banner("info", message));
      return;
    }

    const head = this.head;
    const card = el("div", { class: "queue-card", "data-record-id": head.record_id }, [
      el("div", { class: "question" }, [head.question]),
      el("dl", {}, [
        el("dt", {}, ["Reference answer"]),
        el("dd", { class: "correct-answer" }, [head.correct_answer]),
        el("dt", {}, ["Student answer"]),
        el("dd", { class: "given-answer" }, [head.given_answer]),
        el("dt", {}, ["Similarity"]),
        el("dd", { class: "similarity" }, [fmt(head.s)]),
      ]),
    ]);
    const correct = el("button", { id: "btn-correct", type: "button" }, ["Correct"]);
    correct.addEventListener("click", () => void this.submitCurrent("correct"));
    const incorrect = el("button", { id: "btn-incorrect", type: "button" }, ["Incorrect"]);
    incorrect.addEventListener("click", () => void this.submitCurrent("incorrect"));
    card.append(el("div", { class: "actions" }, [correct, incorrect]));
    this.root.append(card);
  }
}
