"""Command-line entry points: prepare, train, evaluate, experiment, serve,
predict.

Every command reads one declarative config (flags override its keys),
writes artifacts under the run directory with the effective config echoed
inside them, and exits 0 on success, 2 on input/config errors, 3 on
state-consistency errors, 4 on training failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from idcloop.classifier.checkpoint import (
    Checkpoint,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from idcloop.classifier.model import build_model, predict, predict_batch
from idcloop.classifier.training import (
    DataSplit,
    TrainingHistory,
    data_split_from_items,
    train,
)
from idcloop.config import RunConfig, load_run_config
from idcloop.data.corpus import CorpusManifest, PlanItem, plan_corpus, split_corpus
from idcloop.data.ingest import balance_sample, scan_dataset
from idcloop.errors import (
    CheckpointError,
    ConfigError,
    DivergedError,
    IdcloopError,
    StateError,
)
from idcloop.evaluation import (
    MetricsReport,
    compute_metrics,
    confusion_matrix,
    export_history,
)
from idcloop.service.core import HitlService, ServiceSettings, decode_upload
from idcloop.service.protocol import run_validation_protocol
from idcloop.util import atomic_write_text, canonical_json, sha256_hex

CLASS_NAMES = ("IDC-negative", "IDC-positive")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STATE = 3
EXIT_TRAINING = 4


# -- shared plumbing -------------------------------------------------------


def _echo(cfg: RunConfig) -> dict:
    return cfg.to_dict()


def _require_root(cfg: RunConfig) -> Path:
    if cfg.data.root is None:
        raise ConfigError("data.root is required for this command")
    root = Path(cfg.data.root)
    if not root.exists():
        raise ConfigError(f"dataset root does not exist: {root}")
    return root


def _plan_items(cfg: RunConfig) -> list[PlanItem]:
    root = _require_root(cfg)
    records = scan_dataset(root)
    balanced = balance_sample(records, cfg.data.n_per_class, cfg.seed)
    return plan_corpus(balanced, cfg.augment, keep_originals=cfg.split.keep_originals)


def _regenerate_manifest(cfg: RunConfig, items: list[PlanItem]) -> CorpusManifest:
    return split_corpus(
        items,
        train_ratio=cfg.split.train_ratio,
        seed=cfg.seed,
        order=cfg.split.order,
        cfg=cfg.augment,
        keep_originals=cfg.split.keep_originals,
    )


def _manifest_path(cfg: RunConfig, override: Optional[str] = None) -> Path:
    return Path(override) if override else Path(cfg.data_dir) / "manifest.json"


def _checkpoint_path(cfg: RunConfig, override: Optional[str] = None) -> Path:
    return Path(override) if override else Path(cfg.data_dir) / "model.ckpt"


def _read_manifest_file(path: Path) -> tuple[dict, CorpusManifest, bytes]:
    if not path.exists():
        raise ConfigError(f"manifest not found: {path} (run prepare first)")
    raw = path.read_bytes()
    try:
        payload = json.loads(raw)
        corpus = CorpusManifest.from_json(canonical_json(payload["corpus"]))
    except (KeyError, ValueError) as exc:
        raise StateError(f"{path} is not a valid run manifest: {exc}") from exc
    return payload, corpus, raw


def _checked_split(
    cfg: RunConfig, manifest_path: Path
) -> tuple[DataSplit, CorpusManifest, bytes]:
    """Rebuild the corpus plan and verify it matches the stored manifest."""
    _, stored, raw = _read_manifest_file(manifest_path)
    items = _plan_items(cfg)
    regenerated = _regenerate_manifest(cfg, items)
    if regenerated.to_json() != stored.to_json():
        raise StateError(
            f"manifest {manifest_path} does not match the current config and "
            "dataset; re-run prepare or restore the matching config"
        )
    split = data_split_from_items(items, stored, cfg.augment, pad=cfg.data.pad)
    return split, stored, raw


def _report_lines(matrix, report: MetricsReport) -> list[str]:
    percents = report.as_percentages()
    lines = [
        f"confusion: tn={matrix.tn} fp={matrix.fp} fn={matrix.fn} tp={matrix.tp}",
    ]
    for name in ("accuracy", "precision", "sensitivity", "specificity", "f1"):
        value = percents[name]
        lines.append(f"{name:>12}: {value + '%' if value is not None else 'undefined'}")
    return lines


def _score_split(model, x, y) -> tuple:
    _, preds = predict_batch(model, x)
    matrix = confusion_matrix(preds.tolist(), list(int(v) for v in y))
    return matrix, compute_metrics(matrix)


# -- commands --------------------------------------------------------------


def cmd_prepare(cfg: RunConfig, args: argparse.Namespace) -> int:
    root = _require_root(cfg)
    records = scan_dataset(root)
    negatives = sum(1 for r in records if r.label == 0)
    positives = len(records) - negatives
    balanced = balance_sample(records, cfg.data.n_per_class, cfg.seed)
    items = plan_corpus(balanced, cfg.augment, keep_originals=cfg.split.keep_originals)
    manifest = _regenerate_manifest(cfg, items)

    out = _manifest_path(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": _echo(cfg), "corpus": json.loads(manifest.to_json())}
    atomic_write_text(out, canonical_json(payload) + "\n")

    counts = manifest.counts
    train_n = sum(counts["train"].values())
    test_n = sum(counts["test"].values())
    print(f"scanned:  {negatives} negative / {positives} positive")
    print(f"balanced: {cfg.data.n_per_class} per class")
    print(f"corpus:   {len(items)} items")
    print(f"split:    train {train_n} / test {test_n}")
    print(f"manifest: {out}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args: argparse.Namespace) -> int:
    manifest_path = _manifest_path(cfg)
    split, manifest, raw = _checked_split(cfg, manifest_path)
    model = build_model(cfg.model, seed=cfg.seed)
    data_dir = Path(cfg.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    history_path = data_dir / "history.csv"

    try:
        checkpoint, history = train(model, split, cfg.training)
    except DivergedError as err:
        if isinstance(err.history, TrainingHistory) and len(err.history) > 0:
            export_history(err.history, history_path)
            print(f"partial history written: {history_path}", file=sys.stderr)
        raise

    checkpoint = replace(
        checkpoint,
        training_config={
            "run_config": _echo(cfg),
            "manifest_sha256": sha256_hex(raw),
        },
    )
    ckpt_path = _checkpoint_path(cfg)
    save_checkpoint(checkpoint, ckpt_path)
    export_history(history, history_path)

    best = model_from_checkpoint(checkpoint)
    matrix, report = _score_split(best, split.x_test, split.y_test)
    metrics_payload = {
        "config": _echo(cfg),
        "best": checkpoint.metrics,
        "best_epoch": history.best_epoch,
        "test_report": report.to_dict(),
        "confusion": matrix.to_dict(),
    }
    atomic_write_text(
        data_dir / "train_metrics.json", canonical_json(metrics_payload) + "\n"
    )

    print(f"epochs run: {len(history)} (best epoch {history.best_epoch})")
    for line in _report_lines(matrix, report):
        print(line)
    print(f"checkpoint: {ckpt_path}")
    print(f"history:    {history_path}")
    return EXIT_OK


def _load_consistent_checkpoint(
    cfg: RunConfig, args: argparse.Namespace
) -> tuple[Checkpoint, Path, bytes]:
    """Load the checkpoint and prove it was trained on this manifest."""
    ckpt_path = _checkpoint_path(cfg, getattr(args, "checkpoint", None))
    if not ckpt_path.exists():
        raise ConfigError(f"checkpoint not found: {ckpt_path}")
    checkpoint = load_checkpoint(ckpt_path)
    manifest_path = _manifest_path(cfg, getattr(args, "manifest", None))
    _, _, raw = _read_manifest_file(manifest_path)
    stored_hash = (checkpoint.training_config or {}).get("manifest_sha256")
    if stored_hash is None:
        raise StateError(
            f"checkpoint {ckpt_path} does not record the manifest it was "
            "trained on"
        )
    if stored_hash != sha256_hex(raw):
        raise StateError(
            f"checkpoint {ckpt_path} was trained on a different manifest "
            f"than {manifest_path}"
        )
    return checkpoint, manifest_path, raw


def cmd_evaluate(cfg: RunConfig, args: argparse.Namespace) -> int:
    checkpoint, manifest_path, _ = _load_consistent_checkpoint(cfg, args)
    split, _, _ = _checked_split(cfg, manifest_path)
    model = model_from_checkpoint(checkpoint)
    matrix, report = _score_split(model, split.x_test, split.y_test)

    data_dir = Path(cfg.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "config": _echo(cfg),
        "confusion": matrix.to_dict(),
        "metrics": report.to_dict(),
        "percent": report.as_percentages(),
    }
    atomic_write_text(data_dir / "evaluation.json", canonical_json(payload) + "\n")

    for line in _report_lines(matrix, report):
        print(line)
    return EXIT_OK


def cmd_experiment(cfg: RunConfig, args: argparse.Namespace) -> int:
    checkpoint, manifest_path, _ = _load_consistent_checkpoint(cfg, args)
    split, _, _ = _checked_split(cfg, manifest_path)
    epochs = cfg.service.retrain_epochs or cfg.training.epochs
    retrain = replace(cfg.training, epochs=epochs)
    results = run_validation_protocol(
        checkpoint,
        split,
        groups=cfg.protocol.groups,
        n_fp=cfg.protocol.n_fp,
        n_fn=cfg.protocol.n_fn,
        seed=cfg.seed,
        retrain=retrain,
    )

    data_dir = Path(cfg.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    payload = {"config": _echo(cfg), "groups": [r.to_dict() for r in results]}
    atomic_write_text(
        data_dir / "experiment_report.json", canonical_json(payload) + "\n"
    )
    csv_path = data_dir / "experiment_report.csv"
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["group_id", "sample_count", "correct_before", "accuracy_before",
             "correct_after", "accuracy_after"]
        )
        for r in results:
            writer.writerow(
                [r.group_id, r.sample_count, r.correct_before,
                 f"{r.accuracy_before:.4f}", r.correct_after,
                 f"{r.accuracy_after:.4f}"]
            )

    print("group  samples  before  after")
    for r in results:
        print(
            f"{r.group_id:>5}  {r.sample_count:>7}  "
            f"{r.accuracy_before:>5.1%}  {r.accuracy_after:>5.1%}"
        )
    print(f"report: {csv_path}")
    return EXIT_OK


def cmd_serve(cfg: RunConfig, args: argparse.Namespace) -> int:
    import uvicorn

    from idcloop.service.app import create_app

    ckpt_path = _checkpoint_path(cfg, args.checkpoint)
    if not ckpt_path.exists():
        raise ConfigError(f"checkpoint not found: {ckpt_path}")
    manifest_path = _manifest_path(cfg, args.manifest)
    split: Optional[DataSplit] = None
    if manifest_path.exists() and cfg.data.root is not None:
        split, _, _ = _checked_split(cfg, manifest_path)
    else:
        print("no manifest/dataset configured; retraining disabled", file=sys.stderr)

    epochs = cfg.service.retrain_epochs or cfg.training.epochs
    settings = ServiceSettings(
        retrain=replace(cfg.training, epochs=epochs),
        min_corrections=cfg.service.min_corrections,
        duplication=cfg.service.duplication,
        pad_uploads=cfg.data.pad,
        background_jobs=True,
        cold_start=cfg.service.cold_start,
    )
    service = HitlService(Path(cfg.data_dir) / "service", split, settings)
    if service.registry.active_version() is None:
        checkpoint = load_checkpoint(ckpt_path)
        version = service.bootstrap(checkpoint, metrics=checkpoint.metrics)
        print(f"bootstrapped model {version} from {ckpt_path}")
    else:
        print(f"resuming with active model {service.registry.active_version()}")

    static_dir = _static_dir(cfg)
    app = create_app(service, static_dir=static_dir)
    uvicorn.run(app, host=cfg.service.host, port=cfg.service.port, log_level="info")
    return EXIT_OK


def _static_dir(cfg: RunConfig) -> Optional[Path]:
    if cfg.service.static_dir is not None:
        path = Path(cfg.service.static_dir)
        if not path.is_dir():
            raise ConfigError(f"service.static_dir does not exist: {path}")
        return path
    bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return bundled if bundled.is_dir() else None


def cmd_predict(cfg: RunConfig, args: argparse.Namespace) -> int:
    ckpt_path = _checkpoint_path(cfg, args.checkpoint)
    if not ckpt_path.exists():
        raise ConfigError(f"checkpoint not found: {ckpt_path}")
    image_path = Path(args.image)
    if not image_path.exists():
        raise ConfigError(f"image not found: {image_path}")
    checkpoint = load_checkpoint(ckpt_path)
    model = model_from_checkpoint(checkpoint)
    pixels = decode_upload(image_path.read_bytes(), pad=cfg.data.pad)
    probs, label = predict(model, pixels)
    print(
        canonical_json(
            {
                "image": str(image_path),
                "predicted_label": label,
                "class_name": CLASS_NAMES[label],
                "probabilities": [float(probs[0]), float(probs[1])],
                "checkpoint": str(ckpt_path),
            }
        )
    )
    return EXIT_OK


# -- argument parsing ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="run config JSON file")
    common.add_argument("--seed", type=int, default=None,
                        help="override the master seed")
    common.add_argument("--data-dir", default=None,
                        help="override the artifact directory")

    parser = argparse.ArgumentParser(
        prog="idcloop", description="IDC patch classification with a review loop"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("prepare", parents=[common],
                   help="scan, balance, augment-plan, and split the dataset"
                   ).set_defaults(func=cmd_prepare)
    sub.add_parser("train", parents=[common],
                   help="train from the prepared manifest").set_defaults(func=cmd_train)

    for name, func in (("evaluate", cmd_evaluate), ("experiment", cmd_experiment)):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--checkpoint", default=None)
        p.add_argument("--manifest", default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("serve", parents=[common], help="run the review service")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("predict", parents=[common],
                       help="classify one image file to JSON")
    p.add_argument("image")
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config, seed=args.seed, data_dir=args.data_dir)
        return args.func(cfg, args)
    except DivergedError as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return EXIT_TRAINING
    except (CheckpointError, StateError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_STATE
    except IdcloopError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
