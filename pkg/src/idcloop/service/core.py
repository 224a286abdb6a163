"""Review-service engine: predictions, feedback, and retraining.

The service owns a model registry, an append-only event log, and (when
configured for retraining) the in-memory training corpus. All public
methods are safe to call from multiple threads; retraining runs either
inline or on a single background worker, never more than one at a time.
"""

from __future__ import annotations

import io
import threading
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from idcloop.classifier.checkpoint import Checkpoint, model_from_checkpoint
from idcloop.classifier.model import Model, build_model, predict, predict_batch
from idcloop.classifier.training import DataSplit, TrainingConfig, train
from idcloop.data.ingest import PATCH_SIZE
from idcloop.errors import (
    ConflictError,
    DecodeError,
    IdcloopError,
    NotFoundError,
    NotReadyError,
    SizeError,
    ValidationError,
)
from idcloop.evaluation import compute_metrics, confusion_matrix
from idcloop.service.state import (
    EventLog,
    ModelRegistry,
    RetrainJob,
    ReviewRecord,
    replay_events,
)
from idcloop.util import derive_seed, sha256_hex


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def decode_upload(data: bytes, pad: bool = False) -> np.ndarray:
    """Decode arbitrary uploaded image bytes to a (3, 50, 50) float array.

    Uploads carry no dataset filename contract, so this is the only decode
    path that does not go through a PatchRecord. Oversized images are
    rejected; undersized ones are edge-padded only when ``pad`` is set.
    """
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
            pixels = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"could not decode uploaded image: {exc}") from exc
    height, width = pixels.shape[:2]
    if height > PATCH_SIZE or width > PATCH_SIZE:
        raise SizeError(
            f"uploaded image is {width}x{height}, larger than "
            f"{PATCH_SIZE}x{PATCH_SIZE}"
        )
    if (height < PATCH_SIZE or width < PATCH_SIZE) and not pad:
        raise SizeError(
            f"uploaded image is {width}x{height}, smaller than "
            f"{PATCH_SIZE}x{PATCH_SIZE}"
        )
    if height < PATCH_SIZE or width < PATCH_SIZE:
        pixels = np.pad(
            pixels,
            ((0, PATCH_SIZE - height), (0, PATCH_SIZE - width), (0, 0)),
            mode="edge",
        )
    scaled = pixels.astype(np.float32) / np.float32(255.0)
    return np.ascontiguousarray(scaled.transpose(2, 0, 1))


@dataclass(frozen=True)
class ServiceSettings:
    """Tunables for one service instance."""

    retrain: TrainingConfig = TrainingConfig()
    min_corrections: int = 1
    # How many times each corrected sample is appended to the train set.
    duplication: int = 1
    pad_uploads: bool = False
    # Run retrain jobs on a background thread instead of inline.
    background_jobs: bool = False
    # Retrain from fresh random weights instead of the active checkpoint.
    cold_start: bool = False

    def __post_init__(self) -> None:
        if self.min_corrections < 1:
            raise ValidationError("min_corrections must be at least 1")
        if self.duplication < 1:
            raise ValidationError("duplication must be at least 1")


class HitlService:
    """Coordinates predictions, reviewer feedback, and retraining."""

    def __init__(
        self,
        data_dir: Path,
        split: Optional[DataSplit] = None,
        settings: ServiceSettings = ServiceSettings(),
    ) -> None:
        self.data_dir = Path(data_dir)
        self.split = split
        self.settings = settings
        self.uploads_dir = self.data_dir / "uploads"
        self.uploads_dir.mkdir(parents=True, exist_ok=True)
        self.registry = ModelRegistry(self.data_dir / "models")
        self.log = EventLog(self.data_dir / "events.jsonl")
        self._state = replay_events(self.log)
        self._lock = threading.RLock()
        self._worker: Optional[threading.Thread] = None
        self._active_version: Optional[str] = None
        self._active_model: Optional[Model] = None
        self._load_active_model()

    # -- model management -------------------------------------------------

    def _load_active_model(self) -> None:
        version = self.registry.active_version()
        if version is None:
            return
        _, checkpoint = self.registry.load_active()
        self._active_model = model_from_checkpoint(checkpoint)
        self._active_version = version

    def bootstrap(self, checkpoint: Checkpoint, metrics: Optional[dict] = None) -> str:
        """Register and activate a first model for an empty registry."""
        with self._lock:
            if self.registry.active_version() is not None:
                raise ConflictError("registry already has an active model")
            version = self.registry.register(
                checkpoint, metrics=metrics, parent=None, created_at=_now()
            )
            self.registry.activate(version)
            self._load_active_model()
            return version

    def _require_model(self) -> tuple[str, Model]:
        if self._active_model is None or self._active_version is None:
            raise NotReadyError("no active model is available yet")
        return self._active_version, self._active_model

    def model_info(self) -> dict:
        version, _ = self._require_model()
        entry = self.registry.entry(version)
        with self._lock:
            pending = len(self._state.pending_corrections)
            open_job = self._open_job()
        return {
            "version": version,
            "created_at": entry["created_at"],
            "metrics": entry["metrics"],
            "parent": entry["parent"],
            "pending_corrections": pending,
            "active_job": open_job.job_id if open_job is not None else None,
        }

    # -- predictions and feedback -----------------------------------------

    def predict_upload(self, data: bytes) -> ReviewRecord:
        version, model = self._require_model()
        pixels = decode_upload(data, pad=self.settings.pad_uploads)
        digest = sha256_hex(data)
        stored = self.uploads_dir / f"{digest}.png"
        if not stored.exists():
            # Re-encode rather than copying raw bytes so every stored file
            # is a decodable PNG regardless of the uploaded format.
            array = np.round(pixels.transpose(1, 2, 0) * 255.0).astype(np.uint8)
            Image.fromarray(array).save(stored, format="PNG")
        probs, label = predict(model, pixels)
        now = _now()
        record = ReviewRecord(
            review_id=uuid.uuid4().hex[:12],
            image_ref=f"uploads/{digest}.png",
            predicted_label=label,
            probabilities=[float(probs[0]), float(probs[1])],
            verdict="pending",
            model_version=version,
            created_at=now,
            updated_at=now,
        )
        with self._lock:
            self._state.reviews[record.review_id] = record
            self.log.append("review_created", at=now, review=record.to_dict())
        return record

    def get_review(self, review_id: str) -> ReviewRecord:
        with self._lock:
            try:
                return self._state.reviews[review_id]
            except KeyError:
                raise NotFoundError(f"review {review_id!r} does not exist")

    def list_reviews(
        self,
        status: Optional[str] = None,
        offset: int = 0,
        limit: int = 50,
    ) -> dict:
        if status is not None and status not in ("pending", "agree", "disagree"):
            raise ValidationError(f"unknown review status {status!r}")
        if offset < 0 or limit < 1:
            raise ValidationError("offset must be >= 0 and limit >= 1")
        with self._lock:
            records = list(self._state.reviews.values())
        if status is not None:
            records = [r for r in records if r.verdict == status]
        records.sort(key=lambda r: (r.created_at, r.review_id))
        page = records[offset : offset + limit]
        return {
            "total": len(records),
            "offset": offset,
            "limit": limit,
            "reviews": [r.to_dict() for r in page],
        }

    def record_feedback(
        self,
        review_id: str,
        verdict: str,
        corrected_label: Optional[int] = None,
    ) -> ReviewRecord:
        if verdict not in ("agree", "disagree"):
            raise ValidationError(
                f"verdict must be 'agree' or 'disagree', got {verdict!r}"
            )
        with self._lock:
            record = self.get_review(review_id)
            if record.verdict != "pending":
                raise ConflictError(
                    f"review {review_id!r} already has verdict {record.verdict!r}"
                )
            now = _now()
            candidate = replace(
                record,
                verdict=verdict,
                corrected_label=corrected_label,
                updated_at=now,
            )
            # Construction above re-runs the verdict invariants.
            self._state.reviews[review_id] = candidate
            if verdict == "disagree":
                self._state.pending_corrections.append(review_id)
            self.log.append(
                "feedback",
                at=now,
                review_id=review_id,
                verdict=verdict,
                corrected_label=corrected_label,
            )
            return candidate

    def pending_corrections(self) -> list[ReviewRecord]:
        with self._lock:
            return [
                self._state.reviews[review_id]
                for review_id in self._state.pending_corrections
            ]

    # -- retraining --------------------------------------------------------

    def _open_job(self) -> Optional[RetrainJob]:
        for job in self._state.jobs.values():
            if job.open:
                return job
        return None

    def get_job(self, job_id: str) -> RetrainJob:
        with self._lock:
            try:
                return self._state.jobs[job_id]
            except KeyError:
                raise NotFoundError(f"retrain job {job_id!r} does not exist")

    def trigger_retrain(self) -> RetrainJob:
        """Queue a retrain over the currently pending corrections.

        The correction list is snapshotted here; feedback arriving later
        waits for the next job.
        """
        version, _ = self._require_model()
        if self.split is None:
            raise NotReadyError("service has no training corpus configured")
        with self._lock:
            if self._open_job() is not None:
                raise ConflictError("a retrain job is already in progress")
            snapshot = list(self._state.pending_corrections)
            if len(snapshot) < self.settings.min_corrections:
                raise ValidationError(
                    f"need at least {self.settings.min_corrections} pending "
                    f"corrections, have {len(snapshot)}"
                )
            now = _now()
            job = RetrainJob(
                job_id=uuid.uuid4().hex[:12],
                status="queued",
                corrections_included=len(snapshot),
                created_at=now,
                updated_at=now,
            )
            self._state.jobs[job.job_id] = job
            self._state.pending_corrections = [
                r for r in self._state.pending_corrections if r not in snapshot
            ]
            self.log.append(
                "retrain_queued",
                at=now,
                job=job.to_dict(),
                correction_ids=snapshot,
            )
        if self.settings.background_jobs:
            self._worker = threading.Thread(
                target=self._run_job, args=(job.job_id, snapshot, version), daemon=True
            )
            self._worker.start()
        else:
            self._run_job(job.job_id, snapshot, version)
        return self.get_job(job.job_id)

    def wait_for_jobs(self, timeout: Optional[float] = None) -> None:
        worker = self._worker
        if worker is not None:
            worker.join(timeout)

    def _correction_arrays(self, ids: list[str]) -> tuple[np.ndarray, np.ndarray]:
        xs = []
        ys = []
        for review_id in ids:
            record = self._state.reviews[review_id]
            path = self.data_dir / record.image_ref
            with open(path, "rb") as handle:
                xs.append(decode_upload(handle.read(), pad=self.settings.pad_uploads))
            assert record.corrected_label is not None
            ys.append(record.corrected_label)
        return np.stack(xs), np.asarray(ys, dtype=np.int64)

    def _finish_job(self, job: RetrainJob, correction_ids: list[str]) -> None:
        job.updated_at = _now()
        with self._lock:
            if job.status != "completed":
                # Release the snapshot back to the pending queue.
                self._state.pending_corrections = (
                    correction_ids + self._state.pending_corrections
                )
            self.log.append(
                "retrain_finished",
                at=job.updated_at,
                job=job.to_dict(),
                correction_ids=correction_ids,
            )

    def _run_job(self, job_id: str, correction_ids: list[str], version: str) -> None:
        job = self.get_job(job_id)
        job.status = "running"
        job.updated_at = _now()
        try:
            assert self.split is not None
            base_checkpoint = self.registry.load(version)
            x_extra, y_extra = self._correction_arrays(correction_ids)
            if self.settings.duplication > 1:
                x_extra = np.concatenate([x_extra] * self.settings.duplication)
                y_extra = np.concatenate([y_extra] * self.settings.duplication)
            merged = DataSplit(
                x_train=np.concatenate([self.split.x_train, x_extra]),
                y_train=np.concatenate([self.split.y_train, y_extra]),
                x_test=self.split.x_test,
                y_test=self.split.y_test,
            )
            job.metrics_before = self._evaluate_version(version, merged)
            # Warm start from the active weights under a fresh derived seed
            # so repeated retrains do not replay identical shuffles.
            seed = derive_seed("retrain", self.settings.retrain.seed, version)
            cfg = replace(self.settings.retrain, seed=seed)
            if self.settings.cold_start:
                model = build_model(base_checkpoint.model_config, seed=seed)
            else:
                model = model_from_checkpoint(base_checkpoint, seed=seed)
            checkpoint, _ = train(model, merged, cfg)
            new_version = self.registry.register(
                checkpoint,
                metrics=checkpoint.metrics,
                parent=version,
                created_at=_now(),
            )
            self.registry.activate(new_version)
            with self._lock:
                self._load_active_model()
            job.metrics_after = self._evaluate_version(new_version, merged)
            job.new_model_version = new_version
            job.status = "completed"
        except IdcloopError as exc:
            job.status = "failed"
            job.error = f"{type(exc).__name__}: {exc}"
        self._finish_job(job, correction_ids)

    def _evaluate_version(self, version: str, split: DataSplit) -> dict:
        """Metrics for one registered model on the untouched test split."""
        model = model_from_checkpoint(self.registry.load(version))
        _, preds = predict_batch(model, split.x_test)
        matrix = confusion_matrix(preds.tolist(), split.y_test.tolist())
        return compute_metrics(matrix).to_dict()
