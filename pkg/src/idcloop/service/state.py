"""Durable review-service state: records, append-only event log, model registry.

Everything the service must survive a restart with lives in two places: a
JSONL event log (reviews, feedback, retrain lifecycle) and the model
registry's manifest. Both are plain files with documented shapes so they can
be inspected or repaired with standard tools.
"""

from __future__ import annotations

import dataclasses
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from idcloop.classifier.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from idcloop.errors import (
    CheckpointError,
    ConflictError,
    NotFoundError,
    ValidationError,
)
from idcloop.util import atomic_write_text, canonical_json

VERDICTS = ("pending", "agree", "disagree")
JOB_STATUSES = ("queued", "running", "completed", "failed")

# A job in either of these states blocks new retrain requests.
OPEN_JOB_STATUSES = ("queued", "running")


@dataclass
class ReviewRecord:
    """One prediction awaiting (or holding) a reviewer's verdict."""

    review_id: str
    image_ref: str
    predicted_label: int
    probabilities: list[float]
    verdict: str = "pending"
    corrected_label: Optional[int] = None
    model_version: str = ""
    created_at: str = ""
    updated_at: str = ""

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValidationError(f"unknown verdict {self.verdict!r}")
        if self.predicted_label not in (0, 1):
            raise ValidationError(
                f"predicted_label must be 0 or 1, got {self.predicted_label!r}"
            )
        if len(self.probabilities) != 2:
            raise ValidationError("probabilities must hold exactly two entries")
        if self.verdict == "disagree":
            if self.corrected_label is None:
                raise ValidationError("disagree verdict requires corrected_label")
            if self.corrected_label == self.predicted_label:
                raise ValidationError(
                    "corrected_label must differ from predicted_label"
                )
            if self.corrected_label not in (0, 1):
                raise ValidationError(
                    f"corrected_label must be 0 or 1, got {self.corrected_label!r}"
                )
        elif self.corrected_label is not None:
            raise ValidationError(
                f"corrected_label is only allowed with a disagree verdict"
                f" (verdict is {self.verdict!r})"
            )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "ReviewRecord":
        return cls(**payload)


@dataclass
class RetrainJob:
    """Lifecycle of one retraining request."""

    job_id: str
    status: str = "queued"
    corrections_included: int = 0
    metrics_before: Optional[dict] = None
    metrics_after: Optional[dict] = None
    new_model_version: Optional[str] = None
    error: Optional[str] = None
    created_at: str = ""
    updated_at: str = ""

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.status not in JOB_STATUSES:
            raise ValidationError(f"unknown job status {self.status!r}")
        if self.status == "completed" and self.new_model_version is None:
            raise ValidationError("completed job must name its new model version")
        if self.status == "failed" and not self.error:
            raise ValidationError("failed job must carry an error message")

    @property
    def open(self) -> bool:
        return self.status in OPEN_JOB_STATUSES

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "RetrainJob":
        return cls(**payload)


class EventLog:
    """Append-only JSONL log; one JSON object per line.

    Appends are serialized and flushed to disk before returning, so any
    event the caller saw acknowledged survives a crash.
    """

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, event_type: str, **payload: object) -> None:
        line = canonical_json({"type": event_type, **payload})
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
                os.fsync(handle.fileno())

    def events(self) -> Iterator[dict]:
        if not self.path.exists():
            return
        with open(self.path, "r", encoding="utf-8") as handle:
            for raw in handle:
                raw = raw.strip()
                if raw:
                    yield json.loads(raw)


@dataclass
class ReplayedState:
    """State rebuilt from the event log on startup."""

    reviews: dict[str, ReviewRecord] = field(default_factory=dict)
    jobs: dict[str, RetrainJob] = field(default_factory=dict)
    # Review ids with a disagree verdict not yet consumed by a completed
    # retrain, in the order the verdicts arrived.
    pending_corrections: list[str] = field(default_factory=list)


def replay_events(log: EventLog) -> ReplayedState:
    """Rebuild service state from the log.

    A retrain that was queued or running when the process died is marked
    failed here, and its corrections return to the pending queue: the
    active model was never swapped, so nothing was consumed.
    """
    state = ReplayedState()
    open_jobs: dict[str, list[str]] = {}
    for event in log.events():
        kind = event["type"]
        if kind == "review_created":
            record = ReviewRecord.from_dict(event["review"])
            state.reviews[record.review_id] = record
        elif kind == "feedback":
            record = state.reviews[event["review_id"]]
            record.verdict = event["verdict"]
            record.corrected_label = event.get("corrected_label")
            record.updated_at = event.get("at", record.updated_at)
            record.validate()
            if record.verdict == "disagree":
                state.pending_corrections.append(record.review_id)
        elif kind == "retrain_queued":
            job = RetrainJob.from_dict(event["job"])
            state.jobs[job.job_id] = job
            ids = list(event["correction_ids"])
            open_jobs[job.job_id] = ids
            for review_id in ids:
                state.pending_corrections.remove(review_id)
        elif kind == "retrain_finished":
            job = RetrainJob.from_dict(event["job"])
            state.jobs[job.job_id] = job
            ids = open_jobs.pop(job.job_id, [])
            if job.status != "completed":
                # Failed runs release their snapshot back to the queue.
                state.pending_corrections.extend(ids)
        else:
            raise ValidationError(f"unknown event type {kind!r} in log")
    for job_id, ids in open_jobs.items():
        job = state.jobs[job_id]
        job.status = "failed"
        job.error = "interrupted by service restart"
        job.new_model_version = None
        state.pending_corrections.extend(ids)
    return state


class ModelRegistry:
    """Versioned checkpoint store with an atomic active pointer.

    Layout under ``root``: one ``<version>.ckpt`` per registered model plus
    ``manifest.json`` holding ``{"versions": {...}, "active": <version>}``.
    Checkpoint files are immutable once written; activation only rewrites
    the manifest, atomically.
    """

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._manifest_path = self.root / "manifest.json"
        self._manifest = self._read_manifest()

    def _read_manifest(self) -> dict:
        if not self._manifest_path.exists():
            return {"versions": {}, "active": None}
        with open(self._manifest_path, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
        if "versions" not in manifest or "active" not in manifest:
            raise ValidationError("registry manifest is missing required keys")
        return manifest

    def _write_manifest(self) -> None:
        atomic_write_text(self._manifest_path, canonical_json(self._manifest) + "\n")

    def _next_version(self) -> str:
        numbers = [int(v[1:]) for v in self._manifest["versions"]]
        return f"v{max(numbers, default=0) + 1:04d}"

    def versions(self) -> list[str]:
        return sorted(self._manifest["versions"], key=lambda v: int(v[1:]))

    def entry(self, version: str) -> dict:
        try:
            return dict(self._manifest["versions"][version])
        except KeyError:
            raise NotFoundError(f"model version {version!r} is not registered")

    def checkpoint_path(self, version: str) -> Path:
        return self.root / self.entry(version)["file"]

    def register(
        self,
        checkpoint: Checkpoint,
        metrics: Optional[dict] = None,
        parent: Optional[str] = None,
        created_at: str = "",
    ) -> str:
        if parent is not None and parent not in self._manifest["versions"]:
            raise NotFoundError(f"parent version {parent!r} is not registered")
        version = self._next_version()
        filename = f"{version}.ckpt"
        save_checkpoint(checkpoint, self.root / filename)
        self._manifest["versions"][version] = {
            "file": filename,
            "created_at": created_at,
            "metrics": metrics or {},
            "parent": parent,
        }
        self._write_manifest()
        return version

    def activate(self, version: str) -> None:
        """Point the registry at ``version`` after proving the file loads.

        The checkpoint is fully parsed (including its CRC) before the
        pointer moves, so the active version always names a valid file.
        """
        path = self.checkpoint_path(version)
        load_checkpoint(path)
        self._manifest["active"] = version
        self._write_manifest()

    def active_version(self) -> Optional[str]:
        return self._manifest["active"]

    def load(self, version: str) -> Checkpoint:
        return load_checkpoint(self.checkpoint_path(version))

    def load_active(self) -> tuple[str, Checkpoint]:
        version = self.active_version()
        if version is None:
            raise ConflictError("registry has no active model")
        try:
            return version, self.load(version)
        except CheckpointError as exc:
            raise ConflictError(
                f"active checkpoint {version} failed to load: {exc}"
            ) from exc
