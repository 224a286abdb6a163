/**
 * Model dashboard: active version and metrics, the pending-corrections
 * counter, and the retrain button with job monitoring.
 *
 * Retraining polls the job at 1 s, backing off 1.5x per poll up to 5 s,
 * until the job completes or fails. A trigger conflict means a job is
 * already running, so the panel attaches to it instead.
 */

import { ApiClient, ApiError, MetricsDict, RetrainJob } from "./api";
import { el } from "./dom";
import { hasMetrics, METRIC_NAMES, metricText } from "./format";

const POLL_START_MS = 1000;
const POLL_FACTOR = 1.5;
const POLL_MAX_MS = 5000;

export interface RetrainPanel {
  root: HTMLElement;
  refresh: () => Promise<void>;
}

function metricsTable(metrics: MetricsDict): HTMLTableElement {
  const rows = METRIC_NAMES.map((name) =>
    el("tr", {}, [
      el("th", { scope: "row" }, [name]),
      el("td", {}, [metricText(metrics[name])]),
    ]),
  );
  return el("table", { class: "metrics" }, [el("tbody", {}, rows)]);
}

function comparisonTable(before: MetricsDict, after: MetricsDict): HTMLTableElement {
  const head = el("thead", {}, [
    el("tr", {}, [
      el("th", { scope: "col" }, ["metric"]),
      el("th", { scope: "col" }, ["before"]),
      el("th", { scope: "col" }, ["after"]),
    ]),
  ]);
  const rows = METRIC_NAMES.map((name) =>
    el("tr", {}, [
      el("th", { scope: "row" }, [name]),
      el("td", {}, [metricText(before[name])]),
      el("td", {}, [metricText(after[name])]),
    ]),
  );
  return el("table", { class: "metrics comparison" }, [head, el("tbody", {}, rows)]);
}

export function createRetrainPanel(api: ApiClient): RetrainPanel {
  const versionLine = el("p", { class: "model-version" });
  const modelMetrics = el("div", { class: "model-metrics" });
  const counter = el("p", { class: "corrections" });
  const retrainButton = el("button", { type: "button", disabled: "" }, [
    "Retrain with corrections",
  ]);
  const jobStatus = el("p", { role: "status", "aria-live": "polite" });
  const jobResult = el("div", { class: "job-result" });

  const root = el("section", { class: "panel retrain-panel" }, [
    el("h2", {}, ["Model"]),
    versionLine,
    modelMetrics,
    counter,
    el("div", { class: "retrain-row" }, [retrainButton]),
    jobStatus,
    jobResult,
  ]);

  // generation token: starting a new poll loop abandons the previous one
  let pollGeneration = 0;

  async function refresh(): Promise<void> {
    try {
      const info = await api.model();
      versionLine.textContent = info.parent
        ? `Active model ${info.version} (from ${info.parent})`
        : `Active model ${info.version}`;
      modelMetrics.replaceChildren(
        hasMetrics(info.metrics)
          ? metricsTable(info.metrics)
          : el("p", {}, ["No recorded metrics."]),
      );
      counter.textContent = `Pending corrections: ${info.pending_corrections}`;
      const blocked = info.pending_corrections === 0;
      retrainButton.disabled = blocked;
      retrainButton.title = blocked
        ? "Submit at least one correction first"
        : "";
    } catch {
      versionLine.textContent = "Model unavailable.";
    }
  }

  function renderJob(job: RetrainJob): void {
    jobStatus.textContent = `Retrain ${job.job_id}: ${job.status}`;
    if (job.status === "completed" && job.metrics_before && job.metrics_after) {
      jobResult.replaceChildren(
        el("p", {}, [`New model ${job.new_model_version ?? "?"}`]),
        comparisonTable(job.metrics_before, job.metrics_after),
      );
    } else if (job.status === "failed") {
      jobResult.replaceChildren(
        el("p", { class: "error", role: "alert" }, [
          `Retrain failed: ${job.error ?? "unknown error"}`,
        ]),
      );
    }
  }

  function poll(jobId: string): void {
    const generation = ++pollGeneration;
    let delay = POLL_START_MS;

    const tick = async (): Promise<void> => {
      if (generation !== pollGeneration) return;
      let job: RetrainJob;
      try {
        job = await api.job(jobId);
      } catch {
        jobStatus.textContent = `Retrain ${jobId}: status check failed, retrying`;
        schedule();
        return;
      }
      renderJob(job);
      if (job.status === "completed" || job.status === "failed") {
        await refresh();
        return;
      }
      schedule();
    };

    const schedule = (): void => {
      if (generation !== pollGeneration) return;
      window.setTimeout(() => void tick(), delay);
      delay = Math.min(delay * POLL_FACTOR, POLL_MAX_MS);
    };

    void tick();
  }

  retrainButton.addEventListener("click", async () => {
    retrainButton.disabled = true;
    jobResult.replaceChildren();
    try {
      const job = await api.retrain();
      renderJob(job);
      poll(job.job_id);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // a job is already running; follow it instead
        const info = await api.model();
        if (info.active_job !== null) {
          jobStatus.textContent = `Attached to running retrain ${info.active_job}`;
          poll(info.active_job);
        } else {
          await refresh();
        }
      } else {
        jobStatus.textContent =
          err instanceof ApiError ? err.message : "Could not reach the service.";
        await refresh();
      }
    }
  });

  return { root, refresh };
}
