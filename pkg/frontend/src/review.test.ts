import { afterEach, beforeAll, describe, expect, it, vi } from "vitest";

import { ApiClient } from "./api";
import { createReviewPanel } from "./review";
import {
  FakeServer,
  ensureObjectUrl,
  findButton,
  flush,
  pickFile,
  pngFile,
  reviewFixture,
} from "./test-helpers";

interface Mounted {
  server: FakeServer;
  root: HTMLElement;
  onFeedback: ReturnType<typeof vi.fn>;
  input: HTMLInputElement;
}

function mount(): Mounted {
  const server = new FakeServer();
  server.install();
  const onFeedback = vi.fn();
  const panel = createReviewPanel(new ApiClient(""), onFeedback);
  document.body.replaceChildren(panel.root);
  const input = panel.root.querySelector("#patch-file") as HTMLInputElement;
  return { server, root: panel.root, onFeedback, input };
}

async function uploadFixture(m: Mounted): Promise<void> {
  m.server.on("POST", "/api/predict", reviewFixture());
  pickFile(m.input, pngFile());
  findButton(m.root, "Upload and Inspect").click();
  await flush();
}

beforeAll(ensureObjectUrl);

afterEach(() => {
  vi.unstubAllGlobals();
  document.body.replaceChildren();
});

describe("upload", () => {
  it("keeps the upload button disabled until a file is chosen", () => {
    const m = mount();
    const upload = findButton(m.root, "Upload and Inspect");

    expect(upload.disabled).toBe(true);
    pickFile(m.input, pngFile());
    expect(upload.disabled).toBe(false);
  });

  it("renders class name, both probabilities, and model version from the response", async () => {
    const m = mount();
    await uploadFixture(m);

    const headline = m.root.querySelector(".headline") as HTMLElement;
    expect(headline.textContent).toBe("IDC-positive, 93.00%");

    const items = [...m.root.querySelectorAll(".probabilities li")].map(
      (li) => li.textContent,
    );
    expect(items).toEqual(["IDC-negative: 7.00%", "IDC-positive: 93.00%"]);

    const version = m.root.querySelector(".model-version") as HTMLElement;
    expect(version.textContent).toBe("Model m1");

    const preview = m.root.querySelector(".preview") as HTMLImageElement;
    expect(preview.hidden).toBe(false);
  });

  it("shows the service's message inline when the file is rejected", async () => {
    const m = mount();
    m.server.on(
      "POST",
      "/api/predict",
      { code: "decode_error", message: "could not decode uploaded image" },
      422,
    );
    pickFile(m.input, pngFile("notes.txt"));
    findButton(m.root, "Upload and Inspect").click();
    await flush();

    const error = m.root.querySelector(".error") as HTMLElement;
    expect(error.hidden).toBe(false);
    expect(error.textContent).toBe("could not decode uploaded image");
    expect(findButton(m.root, "Retry").hidden).toBe(true);
  });

  it("offers a retry when the service is unreachable", async () => {
    const m = mount();
    m.server.refuseConnections = true;
    pickFile(m.input, pngFile());
    findButton(m.root, "Upload and Inspect").click();
    await flush();

    const error = m.root.querySelector(".error") as HTMLElement;
    expect(error.textContent).toBe("Could not reach the service.");
    const retry = findButton(m.root, "Retry");
    expect(retry.hidden).toBe(false);

    m.server.refuseConnections = false;
    m.server.on("POST", "/api/predict", reviewFixture());
    retry.click();
    await flush();

    expect(error.hidden).toBe(true);
    const headline = m.root.querySelector(".headline") as HTMLElement;
    expect(headline.textContent).toBe("IDC-positive, 93.00%");
  });
});

describe("verdicts", () => {
  it("keeps verdict buttons disabled until a pending record is shown", async () => {
    const m = mount();
    expect(findButton(m.root, "Agree").disabled).toBe(true);
    expect(findButton(m.root, "Disagree").disabled).toBe(true);

    await uploadFixture(m);
    expect(findButton(m.root, "Agree").disabled).toBe(false);
    expect(findButton(m.root, "Disagree").disabled).toBe(false);
  });

  it("agree posts without corrected_label and closes the record", async () => {
    const m = mount();
    await uploadFixture(m);
    m.server.on(
      "POST",
      "/api/reviews/rev-1/feedback",
      reviewFixture({ verdict: "agree" }),
    );

    findButton(m.root, "Agree").click();
    await flush();

    const body = m.server.sent("POST", "/api/reviews/rev-1/feedback")[0].json;
    expect(body).toEqual({ verdict: "agree" });
    expect(m.root.querySelector(".badge")?.textContent).toBe("agree");
    expect(findButton(m.root, "Agree").disabled).toBe(true);
    expect(findButton(m.root, "Disagree").disabled).toBe(true);
    expect(m.onFeedback).toHaveBeenCalledTimes(1);
  });

  it("sends a single request when the verdict button is double-clicked", async () => {
    const m = mount();
    await uploadFixture(m);
    m.server.on(
      "POST",
      "/api/reviews/rev-1/feedback",
      reviewFixture({ verdict: "agree" }),
    );

    const agree = findButton(m.root, "Agree");
    agree.click();
    agree.click();
    await flush();

    expect(m.server.sent("POST", "/api/reviews/rev-1/feedback")).toHaveLength(1);
    expect(m.onFeedback).toHaveBeenCalledTimes(1);
  });

  it("disagree pre-fills the opposite class and posts it", async () => {
    const m = mount();
    await uploadFixture(m);
    m.server.on(
      "POST",
      "/api/reviews/rev-1/feedback",
      reviewFixture({ verdict: "disagree", corrected_label: 0 }),
    );

    findButton(m.root, "Disagree").click();
    const select = m.root.querySelector("#corrected-label") as HTMLSelectElement;
    expect((m.root.querySelector(".correction") as HTMLElement).hidden).toBe(false);
    expect(select.value).toBe("0");

    findButton(m.root, "Submit correction").click();
    await flush();

    const body = m.server.sent("POST", "/api/reviews/rev-1/feedback")[0].json;
    expect(body).toEqual({ verdict: "disagree", corrected_label: 0 });
    expect(m.root.querySelector(".badge")?.textContent).toBe("disagree");
    expect(m.onFeedback).toHaveBeenCalledTimes(1);
  });

  it("pre-fills positive when the prediction was negative", async () => {
    const m = mount();
    m.server.on(
      "POST",
      "/api/predict",
      reviewFixture({ predicted_label: 0, probabilities: [0.6, 0.4] }),
    );
    pickFile(m.input, pngFile());
    findButton(m.root, "Upload and Inspect").click();
    await flush();
    m.server.on(
      "POST",
      "/api/reviews/rev-1/feedback",
      reviewFixture({ verdict: "disagree", corrected_label: 1 }),
    );

    findButton(m.root, "Disagree").click();
    const select = m.root.querySelector("#corrected-label") as HTMLSelectElement;
    expect(select.value).toBe("1");

    findButton(m.root, "Submit correction").click();
    await flush();

    const body = m.server.sent("POST", "/api/reviews/rev-1/feedback")[0].json;
    expect(body).toEqual({ verdict: "disagree", corrected_label: 1 });
  });

  it("lets the reviewer override the pre-filled corrected label", async () => {
    const m = mount();
    await uploadFixture(m);
    m.server.on(
      "POST",
      "/api/reviews/rev-1/feedback",
      reviewFixture({ verdict: "disagree", corrected_label: 1 }),
    );

    findButton(m.root, "Disagree").click();
    const select = m.root.querySelector("#corrected-label") as HTMLSelectElement;
    select.value = "1";
    findButton(m.root, "Submit correction").click();
    await flush();

    const body = m.server.sent("POST", "/api/reviews/rev-1/feedback")[0].json;
    expect(body).toEqual({ verdict: "disagree", corrected_label: 1 });
  });

  it("refreshes from the server when the review was already closed", async () => {
    const m = mount();
    await uploadFixture(m);
    m.server.on(
      "POST",
      "/api/reviews/rev-1/feedback",
      { code: "conflict", message: "review rev-1 is already closed" },
      409,
    );
    m.server.on("GET", "/api/reviews?limit=200", {
      total: 1,
      offset: 0,
      limit: 200,
      reviews: [reviewFixture({ verdict: "agree" })],
    });

    findButton(m.root, "Agree").click();
    await flush();

    expect(m.root.querySelector(".notice")?.textContent).toBe(
      "Review was already closed; refreshed.",
    );
    expect(m.root.querySelector(".badge")?.textContent).toBe("agree");
    expect(findButton(m.root, "Agree").disabled).toBe(true);
    expect(m.onFeedback).toHaveBeenCalledTimes(1);
  });
});
