"""Result persistence: deterministic CSV rows plus a JSON manifest.

Floats are written with 17 significant digits so a rerun of the same config
produces byte-identical files and values round-trip through text losslessly.
Wall-clock data is kept in a separate ``.timing.json`` sidecar so the CSV
and manifest stay deterministic.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .experiment import RunRecord

CSV_HEADER = ["kind", "depth", "width", "params", "lr", "seed", "epochs",
              "stop_reason", "train_metric", "test_metric"]


def fmt_float(x: float) -> str:
    return f"{float(x):.17g}"


def record_row(r: RunRecord) -> list[str]:
    return [r.kind, str(r.depth), str(r.width), str(r.param_count),
            fmt_float(r.learning_rate), str(r.seed), str(r.epochs_run),
            r.stop_reason, fmt_float(r.train_metric), fmt_float(r.test_metric)]


def manifest_path(csv_path: str) -> str:
    return csv_path + ".manifest.json"


def write_results(records, csv_path: str, config_dict: dict) -> None:
    """Write sorted records as CSV plus the config manifest sidecar."""
    records = sorted(records, key=RunRecord.sort_key)
    os.makedirs(os.path.dirname(os.path.abspath(csv_path)), exist_ok=True)
    with open(csv_path, "w", newline="") as f:
        f.write(",".join(CSV_HEADER) + "\n")
        for r in records:
            f.write(",".join(record_row(r)) + "\n")
    manifest = {
        "version": __version__,
        "config": config_dict,
        "rows": len(records),
    }
    with open(manifest_path(csv_path), "w") as f:
        f.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    timing = {
        "total_wall_time": sum(r.wall_time for r in records),
        "cells": len(records),
    }
    with open(csv_path + ".timing.json", "w") as f:
        json.dump(timing, f, indent=2)


def read_records(csv_path: str) -> list[RunRecord]:
    out = []
    with open(csv_path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{csv_path}: unexpected header {reader.fieldnames}")
        for row in reader:
            out.append(RunRecord(
                kind=row["kind"], depth=int(row["depth"]),
                width=int(row["width"]), param_count=int(row["params"]),
                learning_rate=float(row["lr"]), seed=int(row["seed"]),
                epochs_run=int(row["epochs"]), stop_reason=row["stop_reason"],
                train_metric=float(row["train_metric"]),
                test_metric=float(row["test_metric"])))
    return out


def aggregate(records) -> list[tuple]:
    """Mean and standard error of the test metric per (kind, depth) cell."""
    cells: dict[tuple, list[float]] = {}
    for r in records:
        cells.setdefault((r.kind, r.depth), []).append(r.test_metric)
    rows = []
    for (kind, depth), vals in sorted(cells.items()):
        arr = np.asarray(vals, dtype=np.float64)
        mean = float(arr.mean())
        stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
        rows.append((kind, depth, len(arr), mean, stderr))
    return rows


def write_report(records, out_path: str) -> None:
    rows = aggregate(records)
    with open(out_path, "w", newline="") as f:
        f.write("kind,depth,n,mean_test_metric,stderr_test_metric\n")
        for kind, depth, n, mean, stderr in rows:
            f.write(f"{kind},{depth},{n},{fmt_float(mean)},{fmt_float(stderr)}\n")
