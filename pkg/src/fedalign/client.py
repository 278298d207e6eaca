"""One client's round: pseudo-annotate locally-unaware classes, then train.

Local training alternates between the data encoder (label table frozen) and
the label table (encoder frozen), minimizing the supervised loss over the
client's identified classes plus a weighted distillation loss over its
pseudo annotations. Baseline methods reuse the same loop with the objective
altered accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fedalign.errors import ConfigError, DivergenceError
from fedalign.model import (
    MULTI_LABEL,
    SINGLE_LABEL,
    UNKNOWN,
    GlobalModel,
    class_scores_batch,
    cosine_matrix,
    distillation_loss,
    encode_batch,
    sigmoid,
    softmax_rows,
    supervised_loss_batch,
)
from fedalign.numeric import MlpParams, mlp_backward_batch, mlp_forward_batch, sgd_step

METHODS = ("fedalign", "fedavg", "fedprox", "fedrs")


@dataclass
class ClientDataset:
    """A client's local view: features, tri-state labels, identified classes.

    ``labels`` entries are POSITIVE/NEGATIVE on identified classes and
    UNKNOWN elsewhere. ``identified`` holds ascending class indices.
    """

    client_id: int
    features: np.ndarray
    labels: np.ndarray
    identified: np.ndarray
    n_classes: int
    subjects: np.ndarray | None = None

    def __post_init__(self):
        self.identified = np.asarray(sorted(set(np.asarray(self.identified).tolist())), dtype=np.intp)
        if self.identified.size and (self.identified[0] < 0 or self.identified[-1] >= self.n_classes):
            raise ConfigError("identified class index out of range")
        if self.labels.shape != (self.features.shape[0], self.n_classes):
            raise ConfigError("label matrix shape does not match features/classes")
        mask = np.zeros(self.n_classes, dtype=bool)
        mask[self.identified] = True
        if np.any(self.labels[:, ~mask] != UNKNOWN):
            raise ConfigError("labels outside the identified set must be unknown")
        if np.any(self.labels[:, mask] == UNKNOWN):
            raise ConfigError("labels inside the identified set must be known")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def unaware(self) -> np.ndarray:
        mask = np.ones(self.n_classes, dtype=bool)
        mask[self.identified] = False
        return np.flatnonzero(mask)


@dataclass
class ClientConfig:
    """Local-training knobs shared by every client."""

    local_epochs: int = 5
    lr: float = 0.01
    batch_size: int = 32
    method: str = "fedalign"
    distill_weight: float = 1.0
    pos_percentile: float = 95.0
    neg_percentile: float = 5.0
    prox_mu: float = 0.0
    fedrs_alpha: float = 0.5
    no_semantic: bool = False
    no_distillation: bool = False
    no_alternation: bool = False
    distill_every_epoch: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ConfigError("local_epochs and batch_size must be at least 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if not (0.0 <= self.neg_percentile < self.pos_percentile <= 100.0):
            raise ConfigError("need 0 <= neg_percentile < pos_percentile <= 100")
        if self.prox_mu < 0:
            raise ConfigError("prox_mu must be non-negative")
        if not (0.0 < self.fedrs_alpha <= 1.0):
            raise ConfigError("fedrs_alpha must be in (0, 1]")
        if self.distill_weight < 0:
            raise ConfigError("distill_weight must be non-negative")


@dataclass
class DistillEntry:
    sample: int
    cls: int
    pseudo_label: int
    similarity: float


@dataclass
class DistillationSet:
    """Per-round pseudo annotations for locally-unaware classes."""

    entries: list[DistillEntry]
    round_idx: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def n_samples(self) -> int:
        return len({e.sample for e in self.entries})

    def to_target_mask(self, n_samples: int, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
        """Dense (targets, mask) matrices for the distillation loss."""
        targets = np.zeros((n_samples, n_classes))
        mask = np.zeros((n_samples, n_classes), dtype=bool)
        for e in self.entries:
            targets[e.sample, e.cls] = float(e.pseudo_label)
            mask[e.sample, e.cls] = True
        return targets, mask


def nearest_rank_percentile(values: np.ndarray, q: float) -> float:
    """q-th percentile by the nearest-rank rule: the ceil(q/100 * n)-th order
    statistic in ascending order (at least the 1st)."""
    n = values.size
    if n == 0:
        raise ConfigError("percentile of an empty value list")
    rank = max(1, math.ceil(q / 100.0 * n))
    rank = min(rank, n)
    return float(np.sort(values)[rank - 1])


def annotate_from_scores(
    scores: np.ndarray,
    unaware: np.ndarray,
    task: str,
    pos_percentile: float,
    neg_percentile: float,
    round_idx: int = 0,
) -> DistillationSet:
    """Percentile-threshold pseudo annotation given per-(sample, class) scores.

    For each unaware class, samples scoring at or above that class's
    pos_percentile threshold become pseudo-positives and those at or below
    the neg_percentile threshold pseudo-negatives (positive wins when the
    thresholds collapse onto each other). Single-label mode keeps a positive
    only when the class has the highest score over all classes for that
    sample, and drops negatives entirely.
    """
    entries: list[DistillEntry] = []
    if unaware.size == 0 or scores.shape[0] == 0:
        return DistillationSet(entries, round_idx)
    best = np.argmax(scores, axis=1)
    for c in unaware:
        col = scores[:, c]
        hi = nearest_rank_percentile(col, pos_percentile)
        lo = nearest_rank_percentile(col, neg_percentile)
        pos = col >= hi
        if task == SINGLE_LABEL:
            pos &= best == c
            neg = np.zeros_like(pos)
        else:
            neg = (col <= lo) & ~pos
        for i in np.flatnonzero(pos):
            entries.append(DistillEntry(int(i), int(c), 1, float(col[i])))
        for i in np.flatnonzero(neg):
            entries.append(DistillEntry(int(i), int(c), 0, float(col[i])))
    return DistillationSet(entries, round_idx)


def form_distillation_set(
    model: GlobalModel,
    data: ClientDataset,
    pos_percentile: float,
    neg_percentile: float,
    round_idx: int = 0,
) -> DistillationSet:
    """Pseudo annotations from cosine similarity between class rows and the
    encoded local data."""
    if neg_percentile >= pos_percentile:
        raise ConfigError("need neg_percentile < pos_percentile")
    unaware = data.unaware
    if unaware.size == 0:
        return DistillationSet([], round_idx)
    sims = cosine_matrix(encode_batch(model, data.features), model.label_table)
    return annotate_from_scores(
        sims, unaware, model.task, pos_percentile, neg_percentile, round_idx
    )


def _confidence_annotation(
    model: GlobalModel, data: ClientDataset, cfg: ClientConfig, round_idx: int
) -> DistillationSet:
    # semantic ablation: prediction confidence of the round-start global model
    logits = class_scores_batch(encode_batch(model, data.features), model.label_table)
    if model.task == SINGLE_LABEL:
        scores = softmax_rows(logits)
    else:
        scores = sigmoid(logits)
    return annotate_from_scores(
        scores, data.unaware, model.task, cfg.pos_percentile, cfg.neg_percentile, round_idx
    )


@dataclass
class TrainingStats:
    mean_loss: float
    n_samples: int
    distill_entries: int = 0


@dataclass
class _PassPlan:
    update_encoder: bool
    update_table: bool


def _train_pass(
    encoder: MlpParams,
    table: np.ndarray,
    data: ClientDataset,
    cfg: ClientConfig,
    task: str,
    plan: _PassPlan,
    targets: np.ndarray | None,
    mask: np.ndarray | None,
    scale: np.ndarray | None,
    ref_encoder: MlpParams | None,
    ref_table: np.ndarray | None,
    rng: np.random.Generator,
    epoch: int,
) -> tuple[MlpParams, np.ndarray, float]:
    """One minibatch-SGD pass over the local data; returns updated params."""
    n = data.n_samples
    perm = rng.permutation(n)
    total = 0.0
    for start in range(0, n, cfg.batch_size):
        idx = perm[start : start + cfg.batch_size]
        Z, tape = mlp_forward_batch(encoder, data.features[idx])
        logits = Z @ table.T
        if scale is not None:
            loss, G = supervised_loss_batch(logits * scale, data.labels[idx], data.identified, task)
            G = G * scale
        else:
            loss, G = supervised_loss_batch(logits, data.labels[idx], data.identified, task)
        if targets is not None:
            dloss, dG = distillation_loss(logits, targets[idx], mask[idx], task)
            loss = loss + cfg.distill_weight * dloss
            G = G + cfg.distill_weight * dG
        if not np.isfinite(loss):
            raise DivergenceError(
                f"client {data.client_id} epoch {epoch}: non-finite training loss"
            )
        try:
            if plan.update_encoder:
                grads, _ = mlp_backward_batch(tape, G @ table)
                if cfg.prox_mu > 0.0 and ref_encoder is not None:
                    for gW, W, W0 in zip(grads.weights, encoder.weights, ref_encoder.weights):
                        gW += cfg.prox_mu * (W - W0)
                    for gb, b, b0 in zip(grads.biases, encoder.biases, ref_encoder.biases):
                        gb += cfg.prox_mu * (b - b0)
                encoder = sgd_step(encoder, grads, cfg.lr)
            if plan.update_table:
                dT = G.T @ Z
                if cfg.prox_mu > 0.0 and ref_table is not None:
                    dT = dT + cfg.prox_mu * (table - ref_table)
                table = sgd_step(table, dT, cfg.lr)
        except DivergenceError as exc:
            raise DivergenceError(
                f"client {data.client_id} epoch {epoch}: {exc}"
            ) from exc
        total += float(loss) * len(idx)
    return encoder, table, total / n


def local_update(
    model: GlobalModel,
    data: ClientDataset,
    cfg: ClientConfig,
    rng: np.random.Generator,
    round_idx: int = 0,
) -> tuple[MlpParams, np.ndarray, TrainingStats]:
    """Run one client's local epochs and return its updated parameters.

    fedalign alternates encoder and table passes, re-annotating each epoch
    from the current local parameters. fedavg trains both simultaneously
    with no distillation; fedprox adds a proximal pull toward the received
    parameters; fedrs rescales non-identified logits inside the softmax.
    Ablation flags carve the corresponding design out of fedalign.
    """
    if data.n_samples == 0:
        raise ConfigError(f"client {data.client_id} has no samples")
    task = model.task
    encoder = model.encoder.copy()
    table = model.label_table.copy()

    use_prox = cfg.method == "fedprox" and cfg.prox_mu > 0.0
    ref_encoder = model.encoder if use_prox else None
    ref_table = model.label_table if use_prox else None

    scale = None
    if cfg.method == "fedrs" and task == SINGLE_LABEL:
        scale = np.full(model.n_classes, cfg.fedrs_alpha)
        scale[data.identified] = 1.0

    alternate = cfg.method == "fedalign" and not cfg.no_alternation
    use_distill = (
        cfg.method == "fedalign"
        and not cfg.no_distillation
        and cfg.distill_weight > 0.0
        and data.unaware.size > 0
    )

    dset = DistillationSet([], round_idx)
    if use_distill and cfg.no_semantic:
        # global model is fixed within the round, so one annotation suffices
        dset = _confidence_annotation(model, data, cfg, round_idx)

    epoch_losses = []
    for epoch in range(cfg.local_epochs):
        if use_distill and not cfg.no_semantic and (cfg.distill_every_epoch or epoch == 0):
            if not np.all(np.isfinite(table)):
                raise DivergenceError(
                    f"client {data.client_id} epoch {epoch}: non-finite label table"
                )
            current = GlobalModel(encoder, table, task)
            dset = form_distillation_set(
                current, data, cfg.pos_percentile, cfg.neg_percentile, round_idx
            )
        targets = mask = None
        if use_distill and len(dset):
            targets, mask = dset.to_target_mask(data.n_samples, model.n_classes)
        if alternate:
            encoder, table, l1 = _train_pass(
                encoder, table, data, cfg, task, _PassPlan(True, False),
                targets, mask, scale, ref_encoder, ref_table, rng, epoch,
            )
            encoder, table, l2 = _train_pass(
                encoder, table, data, cfg, task, _PassPlan(False, True),
                targets, mask, scale, ref_encoder, ref_table, rng, epoch,
            )
            epoch_losses.append(0.5 * (l1 + l2))
        else:
            encoder, table, loss = _train_pass(
                encoder, table, data, cfg, task, _PassPlan(True, True),
                targets, mask, scale, ref_encoder, ref_table, rng, epoch,
            )
            epoch_losses.append(loss)
    stats = TrainingStats(float(np.mean(epoch_losses)), data.n_samples, len(dset))
    return encoder, table, stats
