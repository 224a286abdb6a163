/**
 * Whole-page flow: both panels wired together the way main.ts does it,
 * a correction driving the counter, then a retrain round trip.
 */

import { afterEach, beforeAll, expect, it, vi } from "vitest";

import { ApiClient } from "./api";
import { createRetrainPanel } from "./retrain";
import { createReviewPanel } from "./review";
import {
  FakeServer,
  ensureObjectUrl,
  findButton,
  flush,
  jobFixture,
  metricsFixture,
  modelFixture,
  pickFile,
  pngFile,
  reviewFixture,
} from "./test-helpers";

beforeAll(ensureObjectUrl);

afterEach(() => {
  vi.useRealTimers();
  vi.unstubAllGlobals();
  document.body.replaceChildren();
});

it("upload, disagree, retrain: the counter and the metrics follow the server", async () => {
  vi.useFakeTimers();
  const server = new FakeServer();
  server.install();

  server
    .on("GET", "/api/model", modelFixture({ pending_corrections: 0 }))
    .on("GET", "/api/model", modelFixture({ pending_corrections: 1 }))
    .on(
      "GET",
      "/api/model",
      modelFixture({ version: "m2", parent: "m1", pending_corrections: 0 }),
    )
    .on("POST", "/api/predict", reviewFixture())
    .on(
      "POST",
      "/api/reviews/rev-1/feedback",
      reviewFixture({ verdict: "disagree", corrected_label: 0 }),
    )
    .on("POST", "/api/retrain", jobFixture({ status: "queued" }))
    .on("GET", "/api/retrain/job-1", jobFixture({ status: "running" }))
    .on(
      "GET",
      "/api/retrain/job-1",
      jobFixture({
        status: "completed",
        corrections_included: 1,
        metrics_before: metricsFixture({ accuracy: 0.8617 }),
        metrics_after: metricsFixture({ accuracy: 0.9333 }),
        new_model_version: "m2",
      }),
    );

  const api = new ApiClient("");
  const retrainPanel = createRetrainPanel(api);
  const reviewPanel = createReviewPanel(api, () => void retrainPanel.refresh());
  document.body.replaceChildren(reviewPanel.root, retrainPanel.root);
  await retrainPanel.refresh();

  const retrainButton = findButton(document.body, "Retrain with corrections");
  expect(retrainButton.disabled).toBe(true);

  const input = document.querySelector("#patch-file") as HTMLInputElement;
  pickFile(input, pngFile());
  findButton(document.body, "Upload and Inspect").click();
  await flush();
  expect(document.querySelector(".headline")?.textContent).toBe(
    "IDC-positive, 93.00%",
  );

  findButton(document.body, "Disagree").click();
  findButton(document.body, "Submit correction").click();
  await flush();
  const body = server.sent("POST", "/api/reviews/rev-1/feedback")[0].json;
  expect(body).toEqual({ verdict: "disagree", corrected_label: 0 });
  expect(document.querySelector(".corrections")?.textContent).toBe(
    "Pending corrections: 1",
  );
  expect(retrainButton.disabled).toBe(false);

  retrainButton.click();
  await flush();
  await vi.advanceTimersByTimeAsync(1000);

  const status = document.querySelector("[role=status]") as HTMLElement;
  expect(status.textContent).toBe("Retrain job-1: completed");
  const result = document.querySelector(".job-result") as HTMLElement;
  expect(result.textContent).toContain("New model m2");
  const firstRow = result.querySelector("tbody tr") as HTMLTableRowElement;
  const accuracyCells = [...firstRow.querySelectorAll("td")].map(
    (td) => td.textContent,
  );
  expect(accuracyCells).toEqual(["86.17%", "93.33%"]);
  expect(document.querySelector(".corrections")?.textContent).toBe(
    "Pending corrections: 0",
  );
});
