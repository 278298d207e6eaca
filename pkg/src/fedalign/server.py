"""Federated orchestration: client selection, dispatch, aggregation, history.

The data encoder is averaged over the selected clients; label-table rows are
averaged only over clients that identify the class, carrying unrepresented
rows forward. Baseline methods average the whole table instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from fedalign.client import ClientConfig, ClientDataset, local_update
from fedalign.errors import ConfigError, DivergenceError, ProtocolError
from fedalign.metrics import evaluate
from fedalign.model import GlobalModel
from fedalign.numeric import MlpParams


@dataclass
class FederationConfig:
    rounds: int = 50
    clients_per_round: int = 5
    seed: int = 0
    client: ClientConfig = field(default_factory=ClientConfig)
    eval_every: int = 1
    checkpoint_every: int = 0
    weight_by_samples: bool = False

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if self.clients_per_round < 1:
            raise ConfigError("clients_per_round must be at least 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass
class RoundRecord:
    round_idx: int
    selected: tuple[int, ...]
    train_loss: float
    macro_f1: float
    macro_accuracy: float
    seconds: float


def select_clients(n_clients: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform k-subset of client ids without replacement, ascending."""
    if not (1 <= k <= n_clients):
        raise ConfigError(f"cannot select {k} of {n_clients} clients")
    return np.sort(rng.choice(n_clients, size=k, replace=False))


def _normalized_weights(k: int, weights: np.ndarray | None) -> np.ndarray:
    if weights is None:
        return np.full(k, 1.0 / k)
    w = np.asarray(weights, dtype=np.float64)
    if w.size != k or np.any(w < 0) or w.sum() <= 0:
        raise ConfigError("bad aggregation weights")
    return w / w.sum()


def _centered_mean(arrays: list[np.ndarray], w: np.ndarray) -> np.ndarray:
    # anchored at the first update so identical updates aggregate exactly
    base = arrays[0]
    out = base.astype(np.float64, copy=True)
    for wi, a in zip(w, arrays):
        out += wi * (a - base)
    return out


def aggregate_data_encoder(
    updates: list[MlpParams], weights: np.ndarray | None = None
) -> MlpParams:
    """Elementwise average of client encoders (optionally sample-weighted)."""
    if not updates:
        raise ProtocolError("no encoder updates to aggregate")
    first = updates[0]
    for u in updates[1:]:
        if u.activation != first.activation or len(u.weights) != len(first.weights):
            raise ConfigError("encoder updates have mismatched structure")
        for a, b in zip(u.weights, first.weights):
            if a.shape != b.shape:
                raise ConfigError("encoder updates have mismatched shapes")
    w = _normalized_weights(len(updates), weights)
    out_w = [
        _centered_mean([u.weights[k] for u in updates], w)
        for k in range(len(first.weights))
    ]
    out_b = [
        _centered_mean([u.biases[k] for u in updates], w)
        for k in range(len(first.biases))
    ]
    return MlpParams(out_w, out_b, first.activation)


def aggregate_label_table(
    updates: list[tuple[np.ndarray, np.ndarray]], previous: np.ndarray
) -> np.ndarray:
    """Per-class averaging: row c is the mean over clients identifying c.

    A class no selected client identifies keeps its previous row (the
    averaging denominator would be zero there).
    """
    if not updates:
        raise ProtocolError("no label-table updates to aggregate")
    for table, _ in updates:
        if table.shape != previous.shape:
            raise ConfigError("label-table update has mismatched shape")
    out = previous.copy()
    for c in range(previous.shape[0]):
        rows = [table[c] for table, ident in updates if c in ident]
        if rows:
            out[c] = _centered_mean(rows, np.full(len(rows), 1.0 / len(rows)))
    return out


def mean_label_table(
    updates: list[np.ndarray], weights: np.ndarray | None = None
) -> np.ndarray:
    """Plain (optionally weighted) mean of whole tables, for the baselines."""
    if not updates:
        raise ProtocolError("no label-table updates to aggregate")
    return _centered_mean(updates, _normalized_weights(len(updates), weights))


def run_federated(
    cfg: FederationConfig,
    clients: list[ClientDataset],
    test,
    model: GlobalModel,
    on_round=None,
) -> tuple[GlobalModel, list[RoundRecord]]:
    """Run the configured number of rounds and return the final model.

    Selection uses one generator stream; each (round, client) pair derives
    its own generator, so runs are reproducible bit for bit. Evaluation runs
    on the first and last round and at the configured cadence; rounds in
    between repeat the latest metrics. A diverging client aborts the run
    with the completed rounds attached to the error.
    """
    if not clients:
        raise ConfigError("need at least one client")
    if cfg.clients_per_round > len(clients):
        raise ConfigError("clients_per_round exceeds the number of clients")
    per_class = cfg.client.method == "fedalign"
    current = model.copy()
    history: list[RoundRecord] = []
    select_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    last_f1 = last_acc = float("nan")
    for t in range(cfg.rounds):
        t0 = time.perf_counter()
        selected = select_clients(len(clients), cfg.clients_per_round, select_rng)
        encoders: list[MlpParams] = []
        tables: list[np.ndarray] = []
        ident_sets: list[np.ndarray] = []
        losses: list[float] = []
        sizes: list[int] = []
        for m in selected:
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, t, int(m)]))
            try:
                enc, table, stats = local_update(
                    current, clients[int(m)], cfg.client, rng, round_idx=t
                )
            except DivergenceError as exc:
                exc.history = history
                raise
            encoders.append(enc)
            tables.append(table)
            ident_sets.append(clients[int(m)].identified)
            losses.append(stats.mean_loss)
            sizes.append(stats.n_samples)
        weights = np.asarray(sizes, dtype=np.float64) if cfg.weight_by_samples else None
        new_encoder = aggregate_data_encoder(encoders, weights)
        if per_class:
            new_table = aggregate_label_table(
                list(zip(tables, ident_sets)), current.label_table
            )
        else:
            new_table = mean_label_table(tables, weights)
        current = GlobalModel(new_encoder, new_table, current.task)
        if t == 0 or t == cfg.rounds - 1 or (t + 1) % cfg.eval_every == 0:
            report = evaluate(current, test)
            last_f1, last_acc = report.macro_f1, report.macro_accuracy
        record = RoundRecord(
            round_idx=t + 1,
            selected=tuple(int(m) for m in selected),
            train_loss=float(np.mean(losses)),
            macro_f1=last_f1,
            macro_accuracy=last_acc,
            seconds=time.perf_counter() - t0,
        )
        history.append(record)
        if on_round is not None:
            on_round(record, current)
    return current, history
