"""Deterministic file emission: round history CSV, checkpoints, reports.

Every writer here produces byte-identical output for identical inputs;
floats round-trip through repr() in checkpoints and fixed 6-decimal text in
the history CSV.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedalign.client import ClientDataset
from fedalign.errors import ConfigError, DataFormatError
from fedalign.model import GlobalModel
from fedalign.numeric import MlpParams
from fedalign.pretrain import LabelSpace
from fedalign.server import RoundRecord

HISTORY_HEADER = "round,train_loss,macro_f1,macro_acc"


def write_history(history: list[RoundRecord], path) -> None:
    """Fixed-schema CSV: round index plus 6-decimal loss and metrics."""
    if not history:
        raise ConfigError("refusing to write an empty history")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for rec in history:
            fh.write(
                f"{rec.round_idx},{rec.train_loss:.6f},"
                f"{rec.macro_f1:.6f},{rec.macro_accuracy:.6f}\n"
            )


def read_history(path) -> list[RoundRecord]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != HISTORY_HEADER:
        raise DataFormatError(f"{path}:1: bad history header")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise DataFormatError(f"{path}:{lineno}: expected 4 columns")
        out.append(
            RoundRecord(
                round_idx=int(parts[0]),
                selected=(),
                train_loss=float(parts[1]),
                macro_f1=float(parts[2]),
                macro_accuracy=float(parts[3]),
                seconds=0.0,
            )
        )
    return out


def _write_row(fh, row) -> None:
    fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_checkpoint(model: GlobalModel, round_idx: int, path) -> None:
    """Full model state as structured text with repr round-trip floats."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fedalign-checkpoint 1\n")
        fh.write(f"round {round_idx}\n")
        fh.write(f"task {model.task}\n")
        fh.write(f"activation {model.encoder.activation}\n")
        fh.write(f"encoder_layers {len(model.encoder.weights)}\n")
        for k, (W, b) in enumerate(zip(model.encoder.weights, model.encoder.biases)):
            fh.write(f"layer {k} {W.shape[0]} {W.shape[1]}\n")
            for row in W:
                _write_row(fh, row)
            fh.write("bias\n")
            _write_row(fh, b)
        fh.write(f"label_table {model.label_table.shape[0]} {model.label_table.shape[1]}\n")
        for row in model.label_table:
            _write_row(fh, row)


def read_checkpoint(path) -> tuple[GlobalModel, int]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    def fail(lineno: int, msg: str):
        raise DataFormatError(f"{path}:{lineno}: {msg}")

    if not lines or lines[0] != "fedalign-checkpoint 1":
        fail(1, "missing checkpoint header")
    try:
        round_idx = int(lines[1].split()[1])
        task = lines[2].split()[1]
        activation = lines[3].split()[1]
        n_layers = int(lines[4].split()[1])
    except (IndexError, ValueError):
        fail(2, "malformed checkpoint preamble")
    pos = 5
    weights, biases = [], []
    for k in range(n_layers):
        head = lines[pos].split()
        if head[:2] != ["layer", str(k)]:
            fail(pos + 1, f"expected layer {k}")
        rows, cols = int(head[2]), int(head[3])
        pos += 1
        W = np.array([[float(v) for v in lines[pos + r].split()] for r in range(rows)])
        pos += rows
        if lines[pos] != "bias":
            fail(pos + 1, "expected bias")
        pos += 1
        b = np.array([float(v) for v in lines[pos].split()])
        pos += 1
        if W.shape != (rows, cols) or b.size != rows:
            fail(pos, "layer dimensions do not match header")
        weights.append(W)
        biases.append(b)
    head = lines[pos].split()
    if head[0] != "label_table":
        fail(pos + 1, "expected label_table")
    n_classes, dim = int(head[1]), int(head[2])
    pos += 1
    table = np.array([[float(v) for v in lines[pos + r].split()] for r in range(n_classes)])
    if table.shape != (n_classes, dim):
        fail(pos + 1, "label table dimensions do not match header")
    return GlobalModel(MlpParams(weights, biases, activation), table, task), round_idx


def write_partition_manifest(
    clients: list[ClientDataset], space: LabelSpace, missing: np.ndarray, path
) -> None:
    """Audit file: per-client identified classes and sample counts."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fedalign-partition 1\n")
        fh.write(f"clients {len(clients)}\n")
        for c in clients:
            ids = ",".join(space.classes[i] for i in c.identified)
            fh.write(f"client {c.client_id} classes {ids} samples {c.n_samples}\n")
        if missing.size:
            fh.write("unidentified " + ",".join(space.classes[i] for i in missing) + "\n")
        else:
            fh.write("unidentified none\n")


def write_summary(fields: dict[str, object], path) -> None:
    """Flat key/value run report; values are pre-formatted strings."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fedalign-summary 1\n")
        for key, value in fields.items():
            fh.write(f"{key} {value}\n")
