/**
 * Typed client for the review service HTTP API.
 *
 * Every error response is a `{code, message}` envelope; the client turns
 * those into ApiError so callers can switch on one shape. Network-level
 * failures pass through as-is (typically TypeError from fetch).
 */

export type Verdict = "pending" | "agree" | "disagree";
export type JobStatus = "queued" | "running" | "completed" | "failed";

export interface ReviewRecord {
  review_id: string;
  image_ref: string;
  predicted_label: 0 | 1;
  probabilities: [number, number];
  verdict: Verdict;
  corrected_label: number | null;
  model_version: string;
  created_at: string;
  updated_at: string;
}

export interface MetricsDict {
  accuracy: number | null;
  sensitivity: number | null;
  specificity: number | null;
  precision: number | null;
  f1: number | null;
  undefined: string[];
}

export interface RetrainJob {
  job_id: string;
  status: JobStatus;
  corrections_included: number;
  metrics_before: MetricsDict | null;
  metrics_after: MetricsDict | null;
  new_model_version: string | null;
  error: string | null;
  created_at: string;
  updated_at: string;
}

export interface ModelInfo {
  version: string;
  created_at: string | null;
  metrics: MetricsDict | Record<string, never>;
  parent: string | null;
  pending_corrections: number;
  active_job: string | null;
}

export interface ReviewPage {
  total: number;
  offset: number;
  limit: number;
  reviews: ReviewRecord[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = "unknown";
  let message = `request failed with status ${response.status}`;
  try {
    const body = (await response.json()) as { code?: string; message?: string };
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body; keep the fallback message
  }
  return new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(private base = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.base + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  private async requestJson<T>(path: string, method: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method,
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  predict(file: File): Promise<ReviewRecord> {
    const form = new FormData();
    form.append("file", file);
    return this.request<ReviewRecord>("/api/predict", {
      method: "POST",
      body: form,
    });
  }

  feedback(
    reviewId: string,
    verdict: "agree" | "disagree",
    correctedLabel?: number,
  ): Promise<ReviewRecord> {
    const body: Record<string, unknown> = { verdict };
    if (correctedLabel !== undefined) {
      body.corrected_label = correctedLabel;
    }
    return this.requestJson<ReviewRecord>(
      `/api/reviews/${encodeURIComponent(reviewId)}/feedback`,
      "POST",
      body,
    );
  }

  reviews(params: { status?: Verdict; offset?: number; limit?: number } = {}): Promise<ReviewPage> {
    const query = new URLSearchParams();
    if (params.status !== undefined) query.set("status", params.status);
    if (params.offset !== undefined) query.set("offset", String(params.offset));
    if (params.limit !== undefined) query.set("limit", String(params.limit));
    const suffix = query.toString() ? `?${query.toString()}` : "";
    return this.request<ReviewPage>(`/api/reviews${suffix}`);
  }

  retrain(): Promise<RetrainJob> {
    return this.request<RetrainJob>("/api/retrain", { method: "POST" });
  }

  job(jobId: string): Promise<RetrainJob> {
    return this.request<RetrainJob>(`/api/retrain/${encodeURIComponent(jobId)}`);
  }

  model(): Promise<ModelInfo> {
    return this.request<ModelInfo>("/api/model");
  }
}
