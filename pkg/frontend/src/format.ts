/**
 * Presentation helpers. Numbers are formatted, never computed: every
 * value shown in the UI arrives from a server field.
 */

import type { MetricsDict, ReviewRecord } from "./api";

export const CLASS_NAMES = ["IDC-negative", "IDC-positive"] as const;

export const METRIC_NAMES = [
  "accuracy",
  "sensitivity",
  "specificity",
  "precision",
  "f1",
] as const;

export function percentText(fraction: number): string {
  return `${(fraction * 100).toFixed(2)}%`;
}

/** "IDC-positive, 93.00%": the predicted class with its own probability. */
export function headline(record: ReviewRecord): string {
  const name = CLASS_NAMES[record.predicted_label];
  return `${name}, ${percentText(record.probabilities[record.predicted_label])}`;
}

export function metricText(value: number | null): string {
  return value === null ? "n/a" : percentText(value);
}

export function hasMetrics(metrics: MetricsDict | Record<string, never> | null): metrics is MetricsDict {
  return metrics !== null && "accuracy" in metrics;
}

export function oppositeLabel(label: 0 | 1): 0 | 1 {
  return label === 0 ? 1 : 0;
}
