"""Matching classifier: data representations against per-class label rows.

The communicated model is a data encoder plus a label-representation table;
classification is a dot product between the two. Supervised losses cover only
the classes a client has labels for; distillation losses consume pseudo
annotations for the remaining classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedalign.errors import ConfigError, DataFormatError
from fedalign.numeric import MlpParams, mlp_forward, mlp_forward_batch

SINGLE_LABEL = "single_label"
MULTI_LABEL = "multi_label"
TASK_KINDS = (SINGLE_LABEL, MULTI_LABEL)

# tri-state per-class label values
POSITIVE = 1
NEGATIVE = 0
UNKNOWN = -1

# probability clamp inside the losses, keeps log() finite
_P_LO = 1e-7
_P_HI = 1.0 - 1e-7


@dataclass
class GlobalModel:
    """Communicated state: encoder parameters plus the label table (one row per class)."""

    encoder: MlpParams
    label_table: np.ndarray
    task: str

    def __post_init__(self):
        if self.task not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.task!r}")
        if self.label_table.ndim != 2:
            raise ConfigError("label table must be 2-D (classes x dim)")
        if self.label_table.shape[1] != self.encoder.out_dim:
            raise ConfigError(
                f"label table dim {self.label_table.shape[1]} does not match "
                f"encoder output dim {self.encoder.out_dim}"
            )
        if not np.all(np.isfinite(self.label_table)):
            raise ConfigError("label table has non-finite entries")

    @property
    def n_classes(self) -> int:
        return self.label_table.shape[0]

    def copy(self) -> "GlobalModel":
        return GlobalModel(self.encoder.copy(), self.label_table.copy(), self.task)


def encode_data(model: GlobalModel, x: np.ndarray) -> np.ndarray:
    """Representation of a single input vector."""
    z, _ = mlp_forward(model.encoder, x)
    return z


def encode_batch(model: GlobalModel, X: np.ndarray) -> np.ndarray:
    z, _ = mlp_forward_batch(model.encoder, X)
    return z


def class_scores(z: np.ndarray, label_table: np.ndarray) -> np.ndarray:
    """Dot-product logits of one representation against every class row."""
    return label_table @ z


def class_scores_batch(Z: np.ndarray, label_table: np.ndarray) -> np.ndarray:
    return Z @ label_table.T


def predict(logits: np.ndarray, task: str):
    """Single-label: argmax class (ties -> lowest index). Multi-label: classes
    with sigmoid probability strictly above 0.5, i.e. positive logits."""
    if task == SINGLE_LABEL:
        return int(np.argmax(logits))
    if task == MULTI_LABEL:
        return set(np.flatnonzero(logits > 0.0).tolist())
    raise ConfigError(f"unknown task kind {task!r}")


def predict_batch(logits: np.ndarray, task: str) -> np.ndarray:
    """Vectorized predict: (n,) argmax indices or (n, C) boolean matrix."""
    if task == SINGLE_LABEL:
        return np.argmax(logits, axis=1)
    if task == MULTI_LABEL:
        return logits > 0.0
    raise ConfigError(f"unknown task kind {task!r}")


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def supervised_loss_batch(
    logits: np.ndarray,
    labels: np.ndarray,
    identified: np.ndarray,
    task: str,
) -> tuple[float, np.ndarray]:
    """Mean supervised loss over a batch and its exact logit gradient.

    ``labels`` is the tri-state matrix; only columns in ``identified`` may
    contribute. Single-label: softmax over all classes, cross-entropy summed
    over identified classes (a row whose positive class is not identified
    contributes nothing). Multi-label: per-class sigmoid BCE over identified
    columns only.
    """
    identified = np.asarray(identified, dtype=np.intp)
    n = logits.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(logits)
    known = labels[:, identified]
    if np.any(known == UNKNOWN):
        raise DataFormatError("unknown label inside the identified class set")
    grad = np.zeros_like(logits, dtype=np.float64)
    if task == SINGLE_LABEL:
        p = softmax_rows(logits)
        pos_rows, pos_cols = np.nonzero(known == POSITIVE)
        if len(pos_rows) != len(set(pos_rows.tolist())):
            raise DataFormatError("single-label row with more than one positive")
        t = identified[pos_cols]
        loss = -np.log(np.clip(p[pos_rows, t], _P_LO, 1.0)).sum()
        grad[pos_rows] = p[pos_rows]
        grad[pos_rows, t] -= 1.0
        return loss / n, grad / n
    if task == MULTI_LABEL:
        x = logits[:, identified]
        y = (known == POSITIVE).astype(np.float64)
        p = sigmoid(x)
        pc = np.clip(p, _P_LO, _P_HI)
        loss = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).sum()
        grad[:, identified] = (p - y) / n
        return loss / n, grad
    raise ConfigError(f"unknown task kind {task!r}")


def supervised_loss(
    logits: np.ndarray, labels: np.ndarray, identified, task: str
) -> tuple[float, np.ndarray]:
    """Per-sample supervised loss; see the batch version for the semantics."""
    loss, grad = supervised_loss_batch(
        logits[None, :], np.asarray(labels)[None, :], np.asarray(list(identified)), task
    )
    return loss, grad[0]


def distillation_loss(
    logits: np.ndarray, targets: np.ndarray, mask: np.ndarray, task: str
) -> tuple[float, np.ndarray]:
    """Loss over pseudo annotations, averaged over annotated samples.

    ``mask`` marks annotated (sample, class) entries and ``targets`` holds the
    pseudo labels there. Multi-label: BCE over masked entries only.
    Single-label: softmax cross-entropy against the (one-hot) pseudo class.
    An empty annotation set gives loss 0 with a zero gradient.
    """
    grad = np.zeros_like(logits, dtype=np.float64)
    active = mask.any(axis=1)
    n_active = int(active.sum())
    if n_active == 0:
        return 0.0, grad
    if task == MULTI_LABEL:
        x = logits[mask]
        y = targets[mask].astype(np.float64)
        p = sigmoid(x)
        pc = np.clip(p, _P_LO, _P_HI)
        loss = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).sum()
        grad[mask] = (p - y) / n_active
        return loss / n_active, grad
    if task == SINGLE_LABEL:
        rows = np.flatnonzero(active)
        if np.any(mask[rows].sum(axis=1) != 1) or np.any(targets[mask] != 1.0):
            raise DataFormatError("single-label pseudo annotations must be one-hot positives")
        p = softmax_rows(logits[rows])
        t = np.argmax(mask[rows], axis=1)
        loss = -np.log(np.clip(p[np.arange(len(rows)), t], _P_LO, 1.0)).sum()
        g = p
        g[np.arange(len(rows)), t] -= 1.0
        grad[rows] = g / n_active
        return loss / n_active, grad
    raise ConfigError(f"unknown task kind {task!r}")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Standard cosine; defined as 0 when either vector has zero norm."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def cosine_matrix(Z: np.ndarray, label_table: np.ndarray) -> np.ndarray:
    """Cosine of every representation row against every class row, (n, C)."""
    zn = np.linalg.norm(Z, axis=1, keepdims=True)
    tn = np.linalg.norm(label_table, axis=1, keepdims=True)
    num = Z @ label_table.T
    den = zn * tn.T
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0.0)
    return out
