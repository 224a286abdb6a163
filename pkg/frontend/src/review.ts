/**
 * Upload-and-inspect panel: pick a patch, read the prediction, then
 * agree or correct it.
 *
 * Verdict controls are live only while the displayed record is pending.
 * Submissions disable their buttons in flight so a double press cannot
 * send two requests. Every displayed number comes from the server.
 */

import { ApiClient, ApiError, ReviewRecord } from "./api";
import { el } from "./dom";
import { CLASS_NAMES, headline, oppositeLabel, percentText } from "./format";

export interface ReviewPanel {
  root: HTMLElement;
}

export function createReviewPanel(
  api: ApiClient,
  onFeedback: () => void,
): ReviewPanel {
  let selectedFile: File | null = null;
  let record: ReviewRecord | null = null;
  let inFlight = false;

  const fileInput = el("input", {
    type: "file",
    accept: "image/png,image/*",
    id: "patch-file",
  });
  const preview = el("img", { class: "preview", alt: "selected patch", hidden: "" });
  const uploadButton = el("button", { type: "button", disabled: "" }, [
    "Upload and Inspect",
  ]);
  const retryButton = el("button", { type: "button", hidden: "" }, ["Retry"]);
  const errorBox = el("p", { class: "error", role: "alert", hidden: "" });

  const resultHeadline = el("p", { class: "headline" });
  const probList = el("ul", { class: "probabilities" });
  const versionLine = el("p", { class: "model-version" });
  const verdictBadge = el("span", { class: "badge" });
  const resultBox = el("div", { class: "result", hidden: "" }, [
    resultHeadline,
    probList,
    versionLine,
    el("p", {}, ["Verdict: ", verdictBadge]),
  ]);

  const agreeButton = el("button", { type: "button", disabled: "" }, ["Agree"]);
  const disagreeButton = el("button", { type: "button", disabled: "" }, [
    "Disagree",
  ]);
  const correctedSelect = el("select", { id: "corrected-label" }, [
    el("option", { value: "0" }, [CLASS_NAMES[0]]),
    el("option", { value: "1" }, [CLASS_NAMES[1]]),
  ]);
  const submitButton = el("button", { type: "button" }, ["Submit correction"]);
  const correctionRow = el("div", { class: "correction", hidden: "" }, [
    el("label", { for: "corrected-label" }, ["Corrected label"]),
    correctedSelect,
    submitButton,
  ]);
  const notice = el("p", { class: "notice", "aria-live": "polite" });

  const root = el("section", { class: "panel review-panel" }, [
    el("h2", {}, ["Review a patch"]),
    el("div", { class: "upload-row" }, [
      el("label", { for: "patch-file" }, ["Choose file"]),
      fileInput,
      uploadButton,
      retryButton,
    ]),
    preview,
    errorBox,
    resultBox,
    el("div", { class: "verdict-row" }, [agreeButton, disagreeButton]),
    correctionRow,
    notice,
  ]);

  function setError(message: string, retryable: boolean): void {
    errorBox.textContent = message;
    errorBox.hidden = false;
    retryButton.hidden = !retryable;
  }

  function clearError(): void {
    errorBox.hidden = true;
    errorBox.textContent = "";
    retryButton.hidden = true;
  }

  function renderRecord(): void {
    if (record === null) return;
    resultBox.hidden = false;
    resultHeadline.textContent = headline(record);
    probList.replaceChildren(
      el("li", {}, [`${CLASS_NAMES[0]}: ${percentText(record.probabilities[0])}`]),
      el("li", {}, [`${CLASS_NAMES[1]}: ${percentText(record.probabilities[1])}`]),
    );
    versionLine.textContent = `Model ${record.model_version}`;
    verdictBadge.textContent = record.verdict;

    const pending = record.verdict === "pending";
    agreeButton.disabled = !pending;
    disagreeButton.disabled = !pending;
    if (!pending) {
      correctionRow.hidden = true;
    }
  }

  fileInput.addEventListener("change", () => {
    selectedFile = fileInput.files?.[0] ?? null;
    uploadButton.disabled = selectedFile === null;
    if (selectedFile !== null) {
      preview.src = URL.createObjectURL(selectedFile);
      preview.hidden = false;
    } else {
      preview.hidden = true;
    }
  });

  async function upload(): Promise<void> {
    if (selectedFile === null || inFlight) return;
    inFlight = true;
    uploadButton.disabled = true;
    clearError();
    notice.textContent = "";
    try {
      record = await api.predict(selectedFile);
      correctionRow.hidden = true;
      renderRecord();
    } catch (err) {
      if (err instanceof ApiError) {
        setError(err.message, false);
      } else {
        setError("Could not reach the service.", true);
      }
    } finally {
      inFlight = false;
      uploadButton.disabled = selectedFile === null;
    }
  }

  uploadButton.addEventListener("click", upload);
  retryButton.addEventListener("click", upload);

  async function submitVerdict(
    verdict: "agree" | "disagree",
    correctedLabel?: number,
  ): Promise<void> {
    if (record === null || inFlight) return;
    inFlight = true;
    agreeButton.disabled = true;
    disagreeButton.disabled = true;
    submitButton.disabled = true;
    try {
      record = await api.feedback(record.review_id, verdict, correctedLabel);
      renderRecord();
      notice.textContent = "Feedback recorded.";
      onFeedback();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // someone already reviewed it; show the server's version
        notice.textContent = "Review was already closed; refreshed.";
        await refreshRecord();
        onFeedback();
      } else {
        setError(err instanceof ApiError ? err.message : "Could not reach the service.", false);
        renderRecord();
      }
    } finally {
      inFlight = false;
      submitButton.disabled = false;
    }
  }

  async function refreshRecord(): Promise<void> {
    if (record === null) return;
    try {
      const page = await api.reviews({ limit: 200 });
      const fresh = page.reviews.find((r) => r.review_id === record?.review_id);
      if (fresh !== undefined) {
        record = fresh;
        renderRecord();
      }
    } catch {
      // keep the stale record if the refresh itself fails
    }
  }

  agreeButton.addEventListener("click", () => {
    void submitVerdict("agree");
  });

  disagreeButton.addEventListener("click", () => {
    if (record === null) return;
    // pre-fill the opposite class; the reviewer can still change it
    correctedSelect.value = String(oppositeLabel(record.predicted_label));
    correctionRow.hidden = false;
    correctedSelect.focus();
  });

  submitButton.addEventListener("click", () => {
    void submitVerdict("disagree", Number(correctedSelect.value));
  });

  return { root };
}
