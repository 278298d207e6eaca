import numpy as np
import pytest

from fedalign.client import ClientConfig, ClientDataset, local_update
from fedalign.data import Dataset, SyntheticSpec, generate_synthetic, partition_by_class_groups
from fedalign.errors import ConfigError, DivergenceError, ProtocolError
from fedalign.model import SINGLE_LABEL, UNKNOWN, GlobalModel
from fedalign.numeric import MlpParams, init_mlp, params_to_vector
from fedalign.pretrain import init_label_table
from fedalign.server import (
    FederationConfig,
    aggregate_data_encoder,
    aggregate_label_table,
    mean_label_table,
    run_federated,
    select_clients,
)


def test_select_all_clients(rng):
    assert select_clients(4, 4, rng).tolist() == [0, 1, 2, 3]


def test_select_subset_distinct(rng):
    picked = select_clients(10, 5, rng)
    assert picked.size == 5
    assert len(set(picked.tolist())) == 5
    assert np.all((0 <= picked) & (picked < 10))


def test_select_deterministic():
    a = select_clients(10, 3, np.random.default_rng(7))
    b = select_clients(10, 3, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_select_too_many_rejected(rng):
    with pytest.raises(ConfigError):
        select_clients(3, 4, rng)


def _net(rng, dims=(3, 4)):
    return init_mlp(list(dims), "identity", rng)


def test_aggregate_encoder_single_identity(rng):
    u = _net(rng)
    out = aggregate_data_encoder([u])
    assert np.array_equal(params_to_vector(out), params_to_vector(u))


def test_aggregate_encoder_mean():
    a = MlpParams([np.array([[1.0]])], [np.zeros(1)], "identity")
    b = MlpParams([np.array([[3.0]])], [np.zeros(1)], "identity")
    out = aggregate_data_encoder([a, b])
    assert out.weights[0][0, 0] == 2.0


def test_aggregate_encoder_matches_mean_oracle(rng):
    updates = [_net(rng) for _ in range(3)]
    out = aggregate_data_encoder(updates)
    expected = np.mean([params_to_vector(u) for u in updates], axis=0)
    assert np.allclose(params_to_vector(out), expected)


def test_aggregate_encoder_idempotent_on_identical(rng):
    u = _net(rng)
    out = aggregate_data_encoder([u.copy() for _ in range(5)])
    assert np.array_equal(params_to_vector(out), params_to_vector(u))


def test_aggregate_encoder_weighted(rng):
    a = MlpParams([np.array([[0.0]])], [np.zeros(1)], "identity")
    b = MlpParams([np.array([[4.0]])], [np.zeros(1)], "identity")
    out = aggregate_data_encoder([a, b], weights=np.array([1.0, 3.0]))
    assert out.weights[0][0, 0] == 3.0


def test_aggregate_encoder_empty_rejected():
    with pytest.raises(ProtocolError):
        aggregate_data_encoder([])


def test_aggregate_table_single_client():
    prev = np.zeros((2, 2))
    out = aggregate_label_table([(np.array([[1.0, 0.0], [9.0, 9.0]]), np.array([0]))], prev)
    assert np.array_equal(out[0], [1.0, 0.0])
    assert np.array_equal(out[1], [0.0, 0.0])


def test_aggregate_table_mean_of_identifying_clients():
    prev = np.zeros((1, 2))
    updates = [
        (np.array([[1.0, 0.0]]), np.array([0])),
        (np.array([[0.0, 1.0]]), np.array([0])),
    ]
    out = aggregate_label_table(updates, prev)
    assert np.array_equal(out[0], [0.5, 0.5])


def test_aggregate_table_carry_forward():
    prev = np.array([[7.0, 7.0], [3.0, 3.0]])
    updates = [(np.array([[1.0, 1.0], [99.0, 99.0]]), np.array([0]))]
    out = aggregate_label_table(updates, prev)
    assert np.array_equal(out[1], prev[1])


def test_aggregate_table_empty_rejected():
    with pytest.raises(ProtocolError):
        aggregate_label_table([], np.zeros((1, 1)))


def test_aggregate_convexity_bounds(rng):
    for _ in range(20):
        k = int(rng.integers(3, 11))
        updates = [_net(rng) for _ in range(k)]
        out = params_to_vector(aggregate_data_encoder(updates))
        stack = np.stack([params_to_vector(u) for u in updates])
        assert np.all(out >= stack.min(axis=0) - 1e-12)
        assert np.all(out <= stack.max(axis=0) + 1e-12)
        tables = [rng.normal(size=(4, 3)) for _ in range(k)]
        idents = [np.sort(rng.choice(4, size=int(rng.integers(1, 5)), replace=False)) for _ in range(k)]
        prev = rng.normal(size=(4, 3))
        table = aggregate_label_table(list(zip(tables, idents)), prev)
        for c in range(4):
            rows = [t[c] for t, ident in zip(tables, idents) if c in ident]
            if not rows:
                assert np.array_equal(table[c], prev[c])
            else:
                lo = np.min(rows, axis=0)
                hi = np.max(rows, axis=0)
                assert np.all(table[c] >= lo - 1e-12)
                assert np.all(table[c] <= hi + 1e-12)


def federated_world(seed=0, n_classes=4, method="fedalign", rounds=3, per_round=2):
    rng = np.random.default_rng(seed)
    spec = SyntheticSpec(n_classes, 1, 20, 3, seed=seed)
    train, test = generate_synthetic(spec, rng)
    groups = [[i] for i in range(n_classes)]
    clients = partition_by_class_groups(train, n_classes, groups, rng)
    encoder = init_mlp([3, 8, 4], "relu", rng)
    table = init_label_table(None, n_classes, 4, rng)
    model = GlobalModel(encoder, table, SINGLE_LABEL)
    cfg = FederationConfig(
        rounds=rounds,
        clients_per_round=per_round,
        seed=seed,
        client=ClientConfig(local_epochs=2, lr=0.05, method=method),
    )
    return cfg, clients, test, model


def test_run_federated_history_shape():
    cfg, clients, test, model = federated_world()
    final, history = run_federated(cfg, clients, test, model)
    assert len(history) == cfg.rounds
    assert [h.round_idx for h in history] == [1, 2, 3]
    assert all(len(h.selected) == cfg.clients_per_round for h in history)
    assert all(0.0 <= h.macro_f1 <= 1.0 for h in history)
    assert all(0.0 <= h.macro_accuracy <= 1.0 for h in history)


def test_run_federated_deterministic():
    cfg, clients, test, model = federated_world()
    a_model, a_hist = run_federated(cfg, clients, test, model)
    b_model, b_hist = run_federated(cfg, clients, test, model)
    assert np.array_equal(a_model.label_table, b_model.label_table)
    assert np.array_equal(
        params_to_vector(a_model.encoder), params_to_vector(b_model.encoder)
    )
    for ra, rb in zip(a_hist, b_hist):
        assert ra.selected == rb.selected
        assert ra.train_loss == rb.train_loss
        assert ra.macro_f1 == rb.macro_f1


def test_run_federated_single_client_identity():
    cfg, clients, test, model = federated_world(n_classes=2, rounds=1, per_round=1)
    cfg.client.distill_weight = 0.0
    clients = clients[:1]
    final, history = run_federated(cfg, clients, test, model)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, 0, 0]))
    enc, table, _ = local_update(model, clients[0], cfg.client, rng, round_idx=0)
    assert np.array_equal(params_to_vector(final.encoder), params_to_vector(enc))
    # single client identifying only part of the classes: its table rows land
    # in the global table, the rest carry forward
    assert np.array_equal(final.label_table[clients[0].identified],
                          table[clients[0].identified])


def test_run_federated_label_row_provenance():
    cfg, clients, test, model = federated_world(rounds=1, per_round=2)
    final, history = run_federated(cfg, clients, test, model)
    selected = history[0].selected
    identified = set()
    for m in selected:
        identified |= set(clients[m].identified.tolist())
    for c in range(model.n_classes):
        if c not in identified:
            assert np.array_equal(final.label_table[c], model.label_table[c])
        else:
            assert not np.array_equal(final.label_table[c], model.label_table[c])


def test_run_federated_default_rounds_is_fifty():
    assert FederationConfig().rounds == 50


def test_run_federated_divergence_keeps_partial_history():
    cfg, clients, test, model = federated_world(rounds=4)
    cfg.client.lr = 1e200
    cfg.client.local_epochs = 2
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as exc_info:
            run_federated(cfg, clients, test, model)
    assert exc_info.value.history == []


def test_mean_label_table_plain_average():
    tables = [np.full((2, 2), 1.0), np.full((2, 2), 3.0)]
    assert np.array_equal(mean_label_table(tables), np.full((2, 2), 2.0))


def test_baseline_aggregation_averages_whole_table():
    cfg, clients, test, model = federated_world(method="fedavg", rounds=1, per_round=2)
    final, history = run_federated(cfg, clients, test, model)
    # fedavg pools every row, so even classes outside the selected clients'
    # identified sets move (softmax couples all rows during local training)
    selected = history[0].selected
    identified = set()
    for m in selected:
        identified |= set(clients[m].identified.tolist())
    outside = [c for c in range(model.n_classes) if c not in identified]
    assert outside, "world should leave some class unidentified this round"
    assert not np.array_equal(final.label_table[outside[0]], model.label_table[outside[0]])
