/** Typed client for the grading service's HTTP API.
 *
 * The client is a thin pipe: it never reshapes or recomputes what the
 * service returns. The fetch implementation is injectable so tests can
 * run against an in-process fixture service.
 */

import type {
  Calibration,
  Constraints,
  GradeResponse,
  GradeValue,
  QueueResponse,
  ScoredItem,
  SessionListing,
  SessionView,
  SpotCheckGradeResponse,
  SpotCheckPlanResponse,
  ValidateResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ApiConfig {
  baseUrl: string;
  token?: string;
  fetchFn?: FetchLike;
}

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
  }

  /** Conflicts and not-founds are show-and-retry conditions in the UI,
   * not crashes. */
  get retryable(): boolean {
    return this.status === 404 || this.status === 409;
  }
}

export interface CalibrationRequest {
  items: ScoredItem[];
  constraints: Constraints;
  exam_sizes: number[];
  n_boot?: number;
  seed?: number;
  calibration_id?: string;
}

export interface SessionRequest {
  calibration_id: string;
  items: ScoredItem[];
  session_id?: string;
  synthetic?: boolean;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly token: string | undefined;
  private readonly fetchFn: FetchLike;

  constructor(config: ApiConfig) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, "");
    this.token = config.token;
    this.fetchFn = config.fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { Accept: "application/json" };
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, "network", `service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let code = "http_error";
      let message = `${response.status} on ${method} ${path}`;
      try {
        const parsed = (await response.json()) as { error?: { code?: string; message?: string } };
        if (parsed.error) {
          code = parsed.error.code ?? code;
          message = parsed.error.message ?? message;
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/health");
  }

  createCalibration(body: CalibrationRequest): Promise<Calibration> {
    return this.request("POST", "/calibrations", body);
  }

  getCalibration(calibrationId: string): Promise<Calibration> {
    return this.request("GET", `/calibrations/${encodeURIComponent(calibrationId)}`);
  }

  listSessions(): Promise<SessionListing> {
    return this.request("GET", "/sessions");
  }

  createSession(body: SessionRequest): Promise<SessionView> {
    return this.request("POST", "/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${encodeURIComponent(sessionId)}`);
  }

  getQueue(sessionId: string, k?: number): Promise<QueueResponse> {
    const suffix = k === undefined ? "" : `?k=${k}`;
    return this.request("GET", `/sessions/${encodeURIComponent(sessionId)}/queue${suffix}`);
  }

  submitGrade(sessionId: string, recordId: string, grade: GradeValue): Promise<GradeResponse> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/grades`, {
      record_id: recordId,
      grade,
    });
  }

  validate(sessionId: string, margin: number, nMin: number): Promise<ValidateResponse> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/validate`, {
      margin,
      n_min: nMin,
    });
  }

  planSpotCheck(sessionId: string, confidence: number): Promise<SpotCheckPlanResponse> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/spot-check`, {
      confidence,
    });
  }

  submitSpotCheckGrade(
    sessionId: string,
    recordId: string,
    grade: GradeValue,
  ): Promise<SpotCheckGradeResponse> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/spot-check/grades`, {
      record_id: recordId,
      grade,
    });
  }
}
