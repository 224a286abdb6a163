/**
 * Shared vitest plumbing: a scripted fetch stand-in plus fixture
 * builders matching the service's response shapes.
 *
 * Responses are plain objects with an async json(), so every request
 * settles in one microtask and fake-timer tests stay deterministic.
 */

import { vi } from "vitest";

import type { MetricsDict, ModelInfo, RetrainJob, ReviewRecord } from "./api";

export interface Recorded {
  method: string;
  path: string;
  json: unknown;
  form: FormData | null;
}

interface Scripted {
  status: number;
  body: unknown;
  raw: boolean;
}

/**
 * Route table keyed by "METHOD path". Each route holds a queue of
 * scripted responses; the queue advances per request and the last
 * entry repeats. Unknown routes get a 404 envelope.
 */
export class FakeServer {
  requests: Recorded[] = [];
  refuseConnections = false;
  private routes = new Map<string, Scripted[]>();

  on(method: string, path: string, body: unknown, status = 200): this {
    return this.push(method, path, { status, body, raw: false });
  }

  /** Non-JSON body: response.json() rejects, like a proxy error page. */
  onText(method: string, path: string, text: string, status = 500): this {
    return this.push(method, path, { status, body: text, raw: true });
  }

  install(): void {
    vi.stubGlobal(
      "fetch",
      vi.fn((input: RequestInfo | URL, init?: RequestInit) =>
        this.handle(String(input), init),
      ),
    );
  }

  sent(method: string, path: string): Recorded[] {
    return this.requests.filter((r) => r.method === method && r.path === path);
  }

  private push(method: string, path: string, scripted: Scripted): this {
    const key = `${method} ${path}`;
    const queue = this.routes.get(key) ?? [];
    queue.push(scripted);
    this.routes.set(key, queue);
    return this;
  }

  private async handle(path: string, init?: RequestInit): Promise<Response> {
    if (this.refuseConnections) {
      throw new TypeError("fetch failed");
    }
    const method = init?.method ?? "GET";
    this.requests.push({
      method,
      path,
      json: typeof init?.body === "string" ? JSON.parse(init.body) : null,
      form: init?.body instanceof FormData ? init.body : null,
    });
    const queue = this.routes.get(`${method} ${path}`);
    if (queue === undefined || queue.length === 0) {
      return asResponse({
        status: 404,
        body: { code: "not_found", message: `no route for ${method} ${path}` },
        raw: false,
      });
    }
    const scripted = queue.length > 1 ? (queue.shift() as Scripted) : queue[0];
    return asResponse(scripted);
  }
}

function asResponse(scripted: Scripted): Response {
  const like = {
    ok: scripted.status >= 200 && scripted.status < 300,
    status: scripted.status,
    json: async () => {
      if (scripted.raw) {
        throw new SyntaxError("not JSON");
      }
      return structuredClone(scripted.body);
    },
  };
  return like as unknown as Response;
}

export function reviewFixture(overrides: Partial<ReviewRecord> = {}): ReviewRecord {
  return {
    review_id: "rev-1",
    image_ref: "uploads/rev-1.png",
    predicted_label: 1,
    probabilities: [0.07, 0.93],
    verdict: "pending",
    corrected_label: null,
    model_version: "m1",
    created_at: "2026-02-01T10:00:00Z",
    updated_at: "2026-02-01T10:00:00Z",
    ...overrides,
  };
}

export function metricsFixture(overrides: Partial<MetricsDict> = {}): MetricsDict {
  return {
    accuracy: 0.8617,
    sensitivity: 0.91,
    specificity: 0.8133,
    precision: 0.8296,
    f1: 0.8679,
    undefined: [],
    ...overrides,
  };
}

export function jobFixture(overrides: Partial<RetrainJob> = {}): RetrainJob {
  return {
    job_id: "job-1",
    status: "queued",
    corrections_included: 0,
    metrics_before: null,
    metrics_after: null,
    new_model_version: null,
    error: null,
    created_at: "2026-02-01T11:00:00Z",
    updated_at: "2026-02-01T11:00:00Z",
    ...overrides,
  };
}

export function modelFixture(overrides: Partial<ModelInfo> = {}): ModelInfo {
  return {
    version: "m1",
    created_at: "2026-02-01T09:00:00Z",
    metrics: metricsFixture(),
    parent: null,
    pending_corrections: 0,
    active_job: null,
    ...overrides,
  };
}

export function pngFile(name = "patch.png"): File {
  return new File([new Uint8Array([0x89, 0x50, 0x4e, 0x47])], name, {
    type: "image/png",
  });
}

/** Simulate picking a file: jsdom input.files is read-only, so shadow it. */
export function pickFile(input: HTMLInputElement, file: File): void {
  const list = { 0: file, length: 1, item: (i: number) => (i === 0 ? file : null) };
  Object.defineProperty(input, "files", { value: list, configurable: true });
  input.dispatchEvent(new Event("change"));
}

export function findButton(root: ParentNode, label: string): HTMLButtonElement {
  const match = [...root.querySelectorAll("button")].find(
    (b) => b.textContent === label,
  );
  if (match === undefined) {
    throw new Error(`no button labelled "${label}"`);
  }
  return match;
}

/** Settle pending promise chains without touching timers. */
export async function flush(turns = 20): Promise<void> {
  for (let i = 0; i < turns; i += 1) {
    await Promise.resolve();
  }
}

export function ensureObjectUrl(): void {
  if (!("createObjectURL" in URL)) {
    Object.defineProperty(URL, "createObjectURL", {
      value: () => "blob:mock-patch",
      configurable: true,
    });
  }
}
