/** Small DOM and formatting helpers shared by the three screens. */

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

/** Render a number exactly as the service sent it; display-side rounding
 * happens only here and never feeds back into state. */
export function fmt(value: number | null | undefined, digits = 3): string {
  if (value === null || value === undefined) return "–";
  if (Number.isInteger(value)) return String(value);
  return value.toFixed(digits);
}

export function fmtPct(value: number | null | undefined, digits = 1): string {
  if (value === null || value === undefined) return "–";
  return `${(value * 100).toFixed(digits)}%`;
}

export function fmtSigned(value: number | null | undefined, digits = 3): string {
  if (value === null || value === undefined) return "–";
  const text = value.toFixed(digits);
  return value > 0 ? `+${text}` : text;
}

const STATUS_LABELS: Record<string, string> = {
  open: "Open",
  awaiting_validation: "Awaiting validation",
  validated: "Validated",
  rejected: "Rejected",
};

export function statusLabel(status: string): string {
  return STATUS_LABELS[status] ?? status;
}

const VERDICT_LABELS: Record<string, string> = {
  accept: "Accept",
  accept_with_warning: "Accept with warning",
  reject: "Reject",
  insufficient_evidence: "Insufficient evidence",
};

export function verdictLabel(verdict: string): string {
  return VERDICT_LABELS[verdict] ?? verdict;
}

export function banner(kind: "info" | "warn" | "error", text: string): HTMLElement {
  return el("div", { class: `banner banner-${kind}`, role: "status" }, [text]);
}
