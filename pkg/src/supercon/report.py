"""Serialization of run outputs: metrics.json, confusion/curves/embeddings CSVs.

Everything written here is deterministic given the run except the fields in
``VOLATILE_METRIC_FIELDS`` (wall time and write timestamp), which consumers
should drop before comparing runs.
"""

from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from .training import RunReport

__all__ = [
    "VOLATILE_METRIC_FIELDS",
    "write_run_report",
    "write_run_manifest",
    "sha256_file",
]

VOLATILE_METRIC_FIELDS = ("wall_time_seconds", "created_at")

METRICS_SCHEMA_VERSION = 1


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def metrics_payload(report: RunReport) -> dict:
    return {
        "schema_version": METRICS_SCHEMA_VERSION,
        "strategy": report.strategy,
        "seed": report.seed,
        "stage1_epochs": report.stage1_epochs,
        "minority_class_id": report.minority_class_id,
        "config": report.config,
        "metrics": report.metrics.to_dict(),
        "separation": report.separation,
        "stages": [
            {
                "stage": t.stage,
                "loss_kind": t.loss_kind,
                "epochs": t.epochs,
                "learning_rate": t.learning_rate,
                "dataset_size": t.dataset_size,
                "steps": t.steps,
                "final_loss": t.epoch_losses[-1] if t.epoch_losses else None,
            }
            for t in report.traces
        ],
        "checksums": report.checksums,
        "notes": report.notes,
        "wall_time_seconds": {t.stage: t.wall_time_seconds for t in report.traces},
        "created_at": datetime.now(timezone.utc).isoformat(),
    }


def write_run_report(report: RunReport, run_dir: str | Path) -> list[Path]:
    """Write metrics.json, confusion.csv, curves.csv and embeddings.csv."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    written = []

    metrics_path = run_dir / "metrics.json"
    metrics_path.write_text(json.dumps(metrics_payload(report), indent=2, sort_keys=True) + "\n")
    written.append(metrics_path)

    confusion_path = run_dir / "confusion.csv"
    cm = report.metrics.confusion.counts
    with confusion_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\predicted"] + [str(c) for c in range(cm.shape[1])])
        for t in range(cm.shape[0]):
            writer.writerow([str(t)] + [str(int(v)) for v in cm[t]])
    written.append(confusion_path)

    curves_path = run_dir / "curves.csv"
    with curves_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "stage", "loss"])
        for trace in report.traces:
            for epoch, loss in enumerate(trace.epoch_losses):
                writer.writerow([str(epoch), trace.stage, repr(float(loss))])
    written.append(curves_path)

    embeddings_path = run_dir / "embeddings.csv"
    emb = report.embeddings
    rep = emb["rep"]
    proj = emb["projection"]
    z = emb.get("z")
    with embeddings_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["id", "label", "proj_0", "proj_1"]
        header += [f"rep_{i}" for i in range(rep.shape[1])]
        if z is not None:
            header += [f"z_{i}" for i in range(z.shape[1])]
        writer.writerow(header)
        for i in range(rep.shape[0]):
            row = [str(i), str(int(emb["labels"][i])), repr(float(proj[i, 0])), repr(float(proj[i, 1]))]
            row += [repr(float(v)) for v in rep[i]]
            if z is not None:
                row += [repr(float(v)) for v in z[i]]
            writer.writerow(row)
    written.append(embeddings_path)
    return written


def write_run_manifest(
    run_dir: str | Path,
    config_path: str | None,
    config_payload: dict,
    seeds: list[int],
    code_version: str,
) -> Path:
    """Record the run's provenance and an inventory of artifact hashes."""
    run_dir = Path(run_dir)
    artifacts = {}
    for path in sorted(run_dir.iterdir()):
        if path.name == "run_manifest.json" or path.is_dir():
            continue
        artifacts[path.name] = sha256_file(path)
    manifest = {
        "schema_version": 1,
        "config_path": config_path,
        "config_sha256": hashlib.sha256(
            json.dumps(config_payload, sort_keys=True).encode("utf-8")
        ).hexdigest(),
        "seeds": seeds,
        "output_dir": str(run_dir),
        "code_version": code_version,
        "artifacts": artifacts,
    }
    manifest_path = run_dir / "run_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path
