import { afterEach, describe, expect, it } from "vitest";
import { vi } from "vitest";

import { ApiClient, ApiError } from "./api";
import { FakeServer, jobFixture, modelFixture, reviewFixture, pngFile } from "./test-helpers";

function setup(): { api: ApiClient; server: FakeServer } {
  const server = new FakeServer();
  server.install();
  return { api: new ApiClient(""), server };
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("predict", () => {
  it("posts the file as multipart form data", async () => {
    const { api, server } = setup();
    server.on("POST", "/api/predict", reviewFixture());

    const record = await api.predict(pngFile("lesion.png"));

    expect(record.review_id).toBe("rev-1");
    expect(record.probabilities).toEqual([0.07, 0.93]);
    const sent = server.sent("POST", "/api/predict");
    expect(sent).toHaveLength(1);
    const file = sent[0].form?.get("file");
    expect(file).toBeInstanceOf(File);
    expect((file as File).name).toBe("lesion.png");
  });
});

describe("feedback", () => {
  it("omits corrected_label when agreeing", async () => {
    const { api, server } = setup();
    server.on("POST", "/api/reviews/rev-1/feedback", reviewFixture({ verdict: "agree" }));

    await api.feedback("rev-1", "agree");

    const body = server.sent("POST", "/api/reviews/rev-1/feedback")[0].json;
    expect(body).toEqual({ verdict: "agree" });
  });

  it("includes corrected_label when disagreeing", async () => {
    const { api, server } = setup();
    server.on(
      "POST",
      "/api/reviews/rev-1/feedback",
      reviewFixture({ verdict: "disagree", corrected_label: 0 }),
    );

    await api.feedback("rev-1", "disagree", 0);

    const body = server.sent("POST", "/api/reviews/rev-1/feedback")[0].json;
    expect(body).toEqual({ verdict: "disagree", corrected_label: 0 });
  });

  it("escapes the review id in the path", async () => {
    const { api, server } = setup();
    server.on("POST", "/api/reviews/a%20b/feedback", reviewFixture());

    await api.feedback("a b", "agree");

    expect(server.sent("POST", "/api/reviews/a%20b/feedback")).toHaveLength(1);
  });
});

describe("reviews", () => {
  it("builds the query string from the given filters", async () => {
    const { api, server } = setup();
    const page = { total: 0, offset: 10, limit: 5, reviews: [] };
    server.on("GET", "/api/reviews?status=pending&offset=10&limit=5", page);

    const result = await api.reviews({ status: "pending", offset: 10, limit: 5 });

    expect(result.reviews).toEqual([]);
  });

  it("omits the query string when no filters are given", async () => {
    const { api, server } = setup();
    server.on("GET", "/api/reviews", { total: 0, offset: 0, limit: 50, reviews: [] });

    const result = await api.reviews();

    expect(result.total).toBe(0);
  });
});

describe("retrain endpoints", () => {
  it("posts to trigger and reads job state by id", async () => {
    const { api, server } = setup();
    server.on("POST", "/api/retrain", jobFixture());
    server.on("GET", "/api/retrain/job-1", jobFixture({ status: "running" }));

    const job = await api.retrain();
    const polled = await api.job(job.job_id);

    expect(job.status).toBe("queued");
    expect(polled.status).toBe("running");
  });

  it("reads model info", async () => {
    const { api, server } = setup();
    server.on("GET", "/api/model", modelFixture({ pending_corrections: 4 }));

    const info = await api.model();

    expect(info.version).toBe("m1");
    expect(info.pending_corrections).toBe(4);
  });
});

describe("error handling", () => {
  it("raises ApiError with the envelope's code and message", async () => {
    const { api, server } = setup();
    server.on(
      "POST",
      "/api/retrain",
      { code: "no_corrections", message: "need at least 1 pending corrections" },
      422,
    );

    const failure = await api.retrain().catch((err: unknown) => err);

    expect(failure).toBeInstanceOf(ApiError);
    const apiError = failure as ApiError;
    expect(apiError.status).toBe(422);
    expect(apiError.code).toBe("no_corrections");
    expect(apiError.message).toBe("need at least 1 pending corrections");
  });

  it("falls back to a generic message on a non-JSON error body", async () => {
    const { api, server } = setup();
    server.onText("GET", "/api/model", "<html>bad gateway</html>", 502);

    const failure = await api.model().catch((err: unknown) => err);

    expect(failure).toBeInstanceOf(ApiError);
    const apiError = failure as ApiError;
    expect(apiError.status).toBe(502);
    expect(apiError.code).toBe("unknown");
    expect(apiError.message).toBe("request failed with status 502");
  });
});
