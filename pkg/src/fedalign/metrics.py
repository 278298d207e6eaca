"""Per-class classification metrics with macro averaging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedalign.errors import ConfigError
from fedalign.model import (
    SINGLE_LABEL,
    GlobalModel,
    class_scores_batch,
    encode_batch,
    predict_batch,
)


@dataclass
class MetricsReport:
    """Per-class precision/recall/F1/accuracy plus their unweighted means.

    Zero-denominator precision, recall, and F1 are defined as 0.
    """

    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: np.ndarray
    macro_f1: float
    macro_accuracy: float
    macro_precision: float
    macro_recall: float


def report_from_binary(pred: np.ndarray, truth: np.ndarray) -> MetricsReport:
    """Metrics from boolean (n, C) prediction and ground-truth matrices."""
    n = pred.shape[0]
    tp = (pred & truth).sum(axis=0).astype(np.float64)
    fp = (pred & ~truth).sum(axis=0).astype(np.float64)
    fn = (~pred & truth).sum(axis=0).astype(np.float64)
    tn = (~pred & ~truth).sum(axis=0).astype(np.float64)
    precision = np.divide(tp, tp + fp, out=np.zeros_like(tp), where=(tp + fp) > 0)
    recall = np.divide(tp, tp + fn, out=np.zeros_like(tp), where=(tp + fn) > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(tp), where=pr > 0)
    accuracy = (tp + tn) / n
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=accuracy,
        macro_f1=float(f1.mean()),
        macro_accuracy=float(accuracy.mean()),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
    )


def evaluate(model: GlobalModel, test) -> MetricsReport:
    """Evaluate on a fully labeled dataset; every class is scored one-vs-rest
    (single-label predictions come from the argmax, multi-label from the 0.5
    probability threshold) and macro values are unweighted class means."""
    if test.n_samples == 0:
        raise ConfigError("cannot evaluate on an empty test set")
    if test.n_classes != model.n_classes:
        raise ConfigError("test label space does not match the model")
    logits = class_scores_batch(encode_batch(model, test.features), model.label_table)
    truth = test.labels == 1
    if model.task == SINGLE_LABEL:
        picked = predict_batch(logits, model.task)
        pred = picked[:, None] == np.arange(model.n_classes)[None, :]
    else:
        pred = predict_batch(logits, model.task)
    return report_from_binary(pred, truth)
