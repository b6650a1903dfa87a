/** Shapes of the service's JSON responses. Field names mirror the wire
 * format exactly; the UI never derives numbers of its own. */

export type GradeValue = "correct" | "incorrect";

export type SessionStatus =
  | "open"
  | "awaiting_validation"
  | "validated"
  | "rejected";

export type VerdictValue =
  | "accept"
  | "accept_with_warning"
  | "reject"
  | "insufficient_evidence";

export interface Thresholds {
  t_incorrect: number;
  t_star: number;
  t_correct: number;
  normalized: boolean;
}

export interface Constraints {
  c_min_incorrect: number;
  c_min_correct: number;
}

export interface Coverage {
  n_total: number;
  n_incorrect: number;
  n_deferred: number;
  n_correct: number;
  f_incorrect: number;
  f_deferred: number;
  f_correct: number;
  flags: string[];
}

export interface CurvePoint {
  threshold: number;
  accuracy: number;
  coverage: number;
  n: number;
}

export interface Calibration {
  calibration_id: string;
  thresholds: Thresholds;
  constraints: Constraints;
  coverage: Coverage;
  curves: { incorrect: CurvePoint[]; correct: CurvePoint[] };
  reference: Record<string, unknown>;
}

/** One labeled record as the service accepts it; "s" may be omitted when
 * the service is configured to score server-side. */
export interface ScoredItem {
  record_id: string;
  question_id: string;
  question: string;
  correct_answer: string;
  given_answer: string;
  grade: GradeValue;
  s?: number;
}

export interface SessionSummary {
  session_id: string;
  status: SessionStatus;
  n_total: number;
  n_auto_incorrect: number;
  n_auto_correct: number;
  n_deferred: number;
  manual_graded: number;
  manual_remaining: number;
  workload_reduction: number;
  synthetic: boolean;
}

export interface SpotCheckSide {
  side: GradeValue;
  bucket_size: number;
  n_planned: number;
  record_ids: string[];
  whole_bucket: boolean;
  achievable_confidence: number;
}

export interface SpotCheckPlan {
  session_id: string;
  confidence: number;
  incorrect: SpotCheckSide;
  correct: SpotCheckSide;
}

export interface SpotCheckSideResult {
  accuracy: number;
  achieved_confidence: number;
  n_checked: number;
  n_matching: number;
  passed: boolean;
}

export interface SpotCheckResult {
  passed: boolean;
  incorrect: SpotCheckSideResult;
  correct: SpotCheckSideResult;
}

export interface SessionView {
  session_id: string;
  calibration_id: string;
  status: SessionStatus;
  summary: SessionSummary;
  thresholds: Thresholds;
  constraints: Constraints;
  spot_check: { plan: SpotCheckPlan | null; result: SpotCheckResult | null };
  validation: ValidationReport | null;
  last_seq: number;
}

export interface SessionListingEntry extends SessionSummary {
  calibration_id: string;
}

export interface SessionListing {
  sessions: SessionListingEntry[];
}

export interface QueueEntry {
  record_id: string;
  s: number;
  question: string;
  correct_answer: string;
  given_answer: string;
}

export interface QueueResponse {
  session_id: string;
  queue: QueueEntry[];
  remaining: number;
}

export interface SideValues {
  incorrect: number | null;
  correct: number | null;
}

export interface RiskSummary {
  incorrect: number | null;
  correct: number | null;
  method: string;
  violation_probability: number | null;
}

export interface ValidationReport {
  session_id: string;
  verdict: VerdictValue;
  margin: number;
  delta_incorrect: number | null;
  delta_correct: number | null;
  n_diff_incorrect: number;
  n_diff_correct: number;
  exam_accuracy: SideValues;
  reference_accuracy: SideValues;
  recommended_tightening: number;
  risk: RiskSummary;
}

export interface GradeResponse {
  session_id: string;
  status: SessionStatus;
  manual_remaining: number;
  seq: number;
}

export interface ValidateResponse {
  session_id: string;
  status: SessionStatus;
  report: ValidationReport;
  seq: number;
}

export interface SpotCheckPlanResponse {
  session_id: string;
  plan: SpotCheckPlan;
  seq: number;
}

export interface SpotCheckGradeResponse {
  session_id: string;
  result: SpotCheckResult | null;
  seq: number;
}
