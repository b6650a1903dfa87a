/** Threshold explorer: slide the two accuracy floors, recalibrate on the
 * service, and look at what the resulting thresholds do to coverage.
 *
 * Every number on screen is lifted from the POST /calibrations response:
 * thresholds, coverage fractions, and the accuracy/coverage curves. The
 * client only draws; it never recomputes accuracies.
 */

import { ApiClient, ApiError } from "./api.js";
import { banner, clear, el, fmt, fmtPct } from "./render.js";
import type { Calibration, CurvePoint, ScoredItem } from "./types.js";

export class ThresholdExplorer {
  private readonly api: ApiClient;
  private readonly root: HTMLElement;

  items: ScoredItem[] | null = null;
  cMinIncorrect = 0.9;
  cMinCorrect = 0.9;
  examSizes: number[] = [20];
  lastCalibration: Calibration | null = null;
  lastError: ApiError | null = null;
  /** Monotone counter so a slow earlier response never paints over a newer one. */
  private requestSeq = 0;

  constructor(api: ApiClient, root: HTMLElement) {
    this.api = api;
    this.root = root;
  }

  /** Width of the deferred band [T^i, T^c] as calibrated by the service. */
  get bandWidth(): number | null {
    if (!this.lastCalibration) return null;
    const t = this.lastCalibration.thresholds;
    return t.t_correct - t.t_incorrect;
  }

  loadItemsFromText(text: string): void {
    const trimmed = text.trim();
    if (!trimmed) throw new Error("dataset is empty");
    let parsed: unknown;
    if (trimmed.startsWith("[")) {
      parsed = JSON.parse(trimmed);
    } else {
      parsed = trimmed.split("\n").map((line) => JSON.parse(line));
    }
    if (!Array.isArray(parsed) || parsed.length === 0) {
      throw new Error("dataset must be a non-empty JSON array or JSONL");
    }
    this.items = parsed as ScoredItem[];
  }

  async setConstraints(cMinIncorrect: number, cMinCorrect: number): Promise<void> {
    this.cMinIncorrect = cMinIncorrect;
    this.cMinCorrect = cMinCorrect;
    await this.recalibrate();
  }

  async recalibrate(): Promise<void> {
    if (!this.items) {
      this.render();
      return;
    }
    const seq = ++this.requestSeq;
    try {
      const calibration = await this.api.createCalibration({
        items: this.items,
        constraints: {
          c_min_incorrect: this.cMinIncorrect,
          c_min_correct: this.cMinCorrect,
        },
        exam_sizes: this.examSizes,
        n_boot: 200,
        seed: 0,
      });
      if (seq !== this.requestSeq) return;
      this.lastCalibration = calibration;
      this.lastError = null;
    } catch (err) {
      if (!(err instanceof ApiError)) throw err;
      if (seq !== this.requestSeq) return;
      this.lastError = err;
    }
    this.render();
  }

  render(): void {
    clear(this.root);
    this.root.append(this.controls());
    if (this.lastError) {
      this.root.append(banner("error", this.lastError.message));
    }
    if (!this.items) {
      this.root.append(banner("info", "Paste a scored dataset (JSONL) to explore thresholds."));
      return;
    }
    const calibration = this.lastCalibration;
    if (!calibration) {
      this.root.append(banner("info", "Move a slider or press Recalibrate."));
      return;
    }

    const t = calibration.thresholds;
    const cov = calibration.coverage;
    const readout = el("dl", { id: "explorer-readout", class: "readout" }, [
      el("dt", {}, ["T^i / T* / T^c"]),
      el("dd", { id: "explorer-thresholds" }, [
        `${fmt(t.t_incorrect)} / ${fmt(t.t_star)} / ${fmt(t.t_correct)}`,
      ]),
      el("dt", {}, ["Deferred band width"]),
      el("dd", { id: "explorer-band-width" }, [fmt(this.bandWidth)]),
      el("dt", {}, ["Deferred fraction"]),
      el("dd", { id: "explorer-deferred-fraction" }, [fmtPct(cov.f_deferred)]),
      el("dt", {}, ["Auto-graded"]),
      el("dd", { id: "explorer-coverage" }, [
        `${cov.n_incorrect} incorrect, ${cov.n_correct} correct of ${cov.n_total} ` +
          `(deferred ${cov.n_deferred})`,
      ]),
    ]);
    if (t.normalized) {
      readout.append(
        el("dt", {}, ["Note"]),
        el("dd", { id: "explorer-normalized" }, [
          "Thresholds crossed and were normalized; the band is empty.",
        ]),
      );
    }
    if (cov.flags.length > 0) {
      readout.append(
        el("dt", {}, ["Flags"]),
        el("dd", { id: "explorer-flags" }, [cov.flags.join(", ")]),
      );
    }
    this.root.append(readout);

    const canvas = el("canvas", {
      id: "explorer-chart",
      width: "640",
      height: "280",
    });
    this.root.append(canvas);
    this.drawChart(canvas, calibration);
  }

  private controls(): HTMLElement {
    const sliderIncorrect = el("input", {
      id: "slider-c-incorrect",
      type: "range",
      min: "0",
      max: "1",
      step: "0.01",
      value: String(this.cMinIncorrect),
    });
    const sliderCorrect = el("input", {
      id: "slider-c-correct",
      type: "range",
      min: "0",
      max: "1",
      step: "0.01",
      value: String(this.cMinCorrect),
    });
    sliderIncorrect.addEventListener("change", () => {
      void this.setConstraints(Number(sliderIncorrect.value), this.cMinCorrect);
    });
    sliderCorrect.addEventListener("change", () => {
      void this.setConstraints(this.cMinIncorrect, Number(sliderCorrect.value));
    });
    const button = el("button", { id: "explorer-recalibrate", type: "button" }, [
      "Recalibrate",
    ]);
    button.addEventListener("click", () => void this.recalibrate());
    return el("div", { class: "explorer-controls" }, [
      el("label", { for: "slider-c-incorrect" }, [
        `C_min incorrect: ${fmt(this.cMinIncorrect, 2)}`,
      ]),
      sliderIncorrect,
      el("label", { for: "slider-c-correct" }, [
        `C_min correct: ${fmt(this.cMinCorrect, 2)}`,
      ]),
      sliderCorrect,
      button,
    ]);
  }

  /** Partition geometry: auto-incorrect region, deferred band, auto-correct
   * region, accuracy curves for both sides, verticals at the thresholds. */
  private drawChart(canvas: HTMLCanvasElement, calibration: Calibration): void {
    const ctx = canvas.getContext("2d");
    if (!ctx) return; // no canvas backend (tests); numbers above still carry the state
    const { curves, thresholds } = calibration;
    const points = [...curves.incorrect, ...curves.correct];
    if (points.length === 0) return;
    const xMin = Math.min(...points.map((p) => p.threshold));
    const xMax = Math.max(...points.map((p) => p.threshold));
    const width = canvas.width;
    const height = canvas.height;
    const pad = 30;
    const x = (v: number) =>
      pad + ((v - xMin) / (xMax - xMin || 1)) * (width - 2 * pad);
    const y = (v: number) => height - pad - v * (height - 2 * pad);

    ctx.clearRect(0, 0, width, height);
    // partition shading: red auto-incorrect, grey deferred, green auto-correct
    ctx.fillStyle = "rgba(220, 80, 80, 0.15)";
    ctx.fillRect(pad, pad, x(thresholds.t_incorrect) - pad, height - 2 * pad);
    ctx.fillStyle = "rgba(128, 128, 128, 0.25)";
    ctx.fillRect(
      x(thresholds.t_incorrect),
      pad,
      x(thresholds.t_correct) - x(thresholds.t_incorrect),
      height - 2 * pad,
    );
    ctx.fillStyle = "rgba(80, 180, 80, 0.15)";
    ctx.fillRect(
      x(thresholds.t_correct),
      pad,
      width - pad - x(thresholds.t_correct),
      height - 2 * pad,
    );

    const line = (series: CurvePoint[], color: string) => {
      ctx.strokeStyle = color;
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      series.forEach((point, i) => {
        if (i === 0) ctx.moveTo(x(point.threshold), y(point.accuracy));
        else ctx.lineTo(x(point.threshold), y(point.accuracy));
      });
      ctx.stroke();
    };
    line(curves.incorrect, "#c0392b");
    line(curves.correct, "#27ae60");

    const vertical = (value: number, color: string, dashed: boolean) => {
      ctx.strokeStyle = color;
      ctx.lineWidth = 1;
      ctx.setLineDash(dashed ? [4, 3] : []);
      ctx.beginPath();
      ctx.moveTo(x(value), pad);
      ctx.lineTo(x(value), height - pad);
      ctx.stroke();
      ctx.setLineDash([]);
    };
    vertical(thresholds.t_incorrect, "#c0392b", false);
    vertical(thresholds.t_star, "#555555", true);
    vertical(thresholds.t_correct, "#27ae60", false);
  }
}
