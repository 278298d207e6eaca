import math
import warnings
from collections import Counter

import numpy as np
import pytest

from fedalign.errors import ConfigError, DataFormatError
from fedalign.model import cosine_similarity
from fedalign.pretrain import (
    CooccurrenceGraph,
    LabelSpace,
    PretrainParams,
    build_cooccurrence_graph,
    count_cooccurrences,
    init_label_table,
    load_embeddings,
    load_label_space,
    make_label_space,
    match_label_in_segment,
    pmi,
    pretrain_name_embeddings,
    save_embeddings,
    save_label_space,
    sgns_pair_objective,
    simulate_walks,
    tokenize,
    train_name_embeddings,
    walk_pairs,
)
from fedalign.numeric import finite_diff_grad


def test_tokenize_lowercase_non_alnum_split():
    assert tokenize("Colon cancer, stage-II!") == ["colon", "cancer", "stage", "ii"]


def test_match_reordered_phrase_within_window():
    segment = ["cancer", "of", "the", "colon"]
    assert match_label_in_segment(segment, ["colon", "cancer"], 4)


def test_match_single_word_verbatim():
    assert match_label_in_segment(["a", "colon", "b"], ["colon"], 1)


def test_match_absent_label():
    assert not match_label_in_segment(["nothing", "relevant", "here"], ["colon"], 4)


def test_match_needs_window_tight_enough():
    segment = ["colon", "x", "x", "x", "cancer"]
    assert not match_label_in_segment(segment, ["colon", "cancer"], 4)
    assert match_label_in_segment(segment, ["colon", "cancer"], 5)


def test_match_duplicate_words_need_duplicates():
    assert not match_label_in_segment(["so", "so", "good"], ["so", "so", "so"], 3)
    assert match_label_in_segment(["so", "so", "so"], ["so", "so", "so"], 3)


def two_label_space():
    return make_label_space({"A": "alpha", "B": "bravo"})


def test_counts_shared_segment():
    corpus = ["alpha runs alone", "alpha meets bravo"]
    counts = count_cooccurrences(corpus, two_label_space())
    assert counts.segment_count == 2
    assert counts.counts.tolist() == [2, 1]
    assert counts.joint[0, 1] == 1
    # probabilities implied: p(A)=1.0, p(B)=0.5, p(A,B)=0.5


def test_counts_never_cooccurring():
    corpus = ["alpha here", "bravo there"]
    counts = count_cooccurrences(corpus, two_label_space())
    assert counts.joint[0, 1] == 0


def test_counts_empty_corpus_rejected():
    with pytest.raises(DataFormatError):
        count_cooccurrences([], two_label_space())


def _oracle_counts(segments, space):
    """Independent per-segment scan: window positions enumerated directly."""
    n = len(space)
    counts = np.zeros(n, dtype=int)
    joint = np.zeros((n, n), dtype=int)
    for seg in segments:
        words = tokenize(seg)
        hits = []
        for i in range(n):
            name, win = space.names[i], space.windows[i]
            starts = range(max(1, len(words) - win + 1)) if len(words) > win else [0]
            found = False
            for s in starts:
                window = words[s : s + win]
                if all(window.count(w) >= k for w, k in Counter(name).items()):
                    found = True
                    break
            if found:
                hits.append(i)
        for a in hits:
            counts[a] += 1
            for b in hits:
                if b != a:
                    joint[a, b] += 1
    return counts, joint


def test_counts_match_brute_force_scan(rng):
    space = make_label_space(
        {"A": "alpha", "B": "bravo", "C": "colon cancer", "D": "delta delta"}
    )
    vocab = ["alpha", "bravo", "colon", "cancer", "delta", "the", "of", "x", "y"]
    for trial in range(10):
        n_seg = int(rng.integers(4, 60)) if trial < 9 else 1000
        segments = [
            " ".join(rng.choice(vocab, size=int(rng.integers(1, 12))))
            for _ in range(n_seg)
        ]
        got = count_cooccurrences(segments, space)
        counts, joint = _oracle_counts(segments, space)
        assert np.array_equal(got.counts, counts)
        assert np.array_equal(got.joint, joint)


def test_pmi_independent_labels_zero():
    # p(A)=p(B)=0.5, p(A,B)=0.25
    corpus = ["alpha x", "alpha bravo", "bravo y", "z"]
    values, present = pmi(count_cooccurrences(corpus, two_label_space()))
    assert present[0, 1]
    assert math.isclose(values[0, 1], 0.0, abs_tol=1e-12)


def test_pmi_perfect_cooccurrence_ln2():
    corpus = ["alpha bravo", "bravo alpha", "quiet", "still"]
    values, present = pmi(count_cooccurrences(corpus, two_label_space()))
    assert present[0, 1]
    assert math.isclose(values[0, 1], math.log(2), rel_tol=1e-12)


def test_pmi_three_label_formula_oracle(rng):
    space = make_label_space({"A": "alpha", "B": "bravo", "C": "charlie"})
    vocab = ["alpha", "bravo", "charlie", "x", "y"]
    segments = [
        " ".join(rng.choice(vocab, size=int(rng.integers(1, 6)))) for _ in range(50)
    ]
    counts = count_cooccurrences(segments, space)
    values, present = pmi(counts)
    total = counts.segment_count
    for i in range(3):
        for j in range(3):
            if i == j:
                assert not present[i, j]
                continue
            if counts.joint[i, j] == 0:
                assert not present[i, j]
            else:
                expected = np.log(
                    (counts.joint[i, j] / total)
                    / ((counts.counts[i] / total) * (counts.counts[j] / total))
                )
                assert values[i, j] == expected
    assert np.array_equal(values, values.T)
    assert np.array_equal(present, present.T)


def _pmi_matrices(pairs: dict[tuple[int, int], float], n: int):
    values = np.zeros((n, n))
    present = np.zeros((n, n), dtype=bool)
    for (i, j), v in pairs.items():
        values[i, j] = values[j, i] = v
        present[i, j] = present[j, i] = True
    return values, present


def test_graph_centering_drops_nonpositive():
    values, present = _pmi_matrices({(0, 1): 1.0, (0, 2): 2.0, (1, 2): 3.0}, 3)
    g = build_cooccurrence_graph(values, present)
    assert g.n_edges == 1
    assert g.neighbors[1].tolist() == [2]
    assert g.weights[1].tolist() == [1.0]
    assert g.neighbors[0].size == 0


def test_graph_single_value_centers_to_empty():
    values, present = _pmi_matrices({(0, 1): 0.7}, 2)
    with pytest.warns(UserWarning):
        g = build_cooccurrence_graph(values, present)
    assert g.n_edges == 0


def test_graph_two_equal_values_both_dropped():
    values, present = _pmi_matrices({(0, 1): 1.5, (1, 2): 1.5}, 3)
    with pytest.warns(UserWarning):
        g = build_cooccurrence_graph(values, present)
    assert g.n_edges == 0


def test_graph_transition_probabilities_normalized():
    values, present = _pmi_matrices(
        {(0, 1): 4.0, (0, 2): 3.0, (1, 2): 2.0, (0, 3): 1.0}, 4
    )
    g = build_cooccurrence_graph(values, present)
    for u in range(4):
        if g.weights[u].size:
            assert math.isclose(g.probs[u].sum(), 1.0, rel_tol=1e-12)
            assert np.all(g.weights[u] > 0)


def test_walks_alternate_on_single_edge(rng):
    g = CooccurrenceGraph(
        2, [np.array([1]), np.array([0])], [np.array([1.0]), np.array([1.0])]
    )
    walks = simulate_walks(g, 4, 3, rng)
    assert walks[0] == [0, 1, 0, 1]
    assert walks[-1] == [1, 0, 1, 0]


def test_walks_follow_normalized_weights(rng):
    g = CooccurrenceGraph(
        3,
        [np.array([1, 2]), np.array([0]), np.array([0])],
        [np.array([1.0, 3.0]), np.array([1.0]), np.array([3.0])],
    )
    walks = simulate_walks(g, 2, 10_000, rng)
    first_steps = [w[1] for w in walks[:10_000]]
    freq2 = first_steps.count(2) / 10_000
    assert abs(freq2 - 0.75) < 0.02
    assert abs(first_steps.count(1) / 10_000 - 0.25) < 0.02


def test_walk_from_isolated_node(rng):
    g = CooccurrenceGraph(2, [np.array([], dtype=np.int64), np.array([], dtype=np.int64)],
                          [np.array([]), np.array([])])
    walks = simulate_walks(g, 5, 1, rng)
    assert walks == [[0], [1]]


def test_walk_pairs_window():
    pairs = walk_pairs([[3, 1, 4]], context_window=1)
    assert pairs.tolist() == [[3, 1], [1, 3], [1, 4], [4, 1]]


def test_embeddings_pull_cooccurring_nodes_together():
    walks = [[0, 1, 0, 1, 0, 1] for _ in range(30)]
    params = PretrainParams(embed_dim=16, context_window=2, epochs=5, lr=0.05)
    emb = train_name_embeddings(walks, 3, params, np.random.default_rng(0))
    assert cosine_similarity(emb[0], emb[1]) > cosine_similarity(emb[0], emb[2])


def test_embeddings_shape_and_isolated_nodes_keep_init():
    params = PretrainParams(embed_dim=8, epochs=2)
    rng_a = np.random.default_rng(1)
    init = rng_a.uniform(-0.5 / 8, 0.5 / 8, (4, 8))
    emb = train_name_embeddings([[0, 1]], 4, params, np.random.default_rng(1))
    assert emb.shape == (4, 8)
    # nodes 2 and 3 appear in no walk
    assert np.array_equal(emb[2], init[2])
    assert np.array_equal(emb[3], init[3])


def test_embeddings_deterministic(each_backend):
    walks = [[0, 1, 2], [2, 1, 0], [1, 2, 0]]
    params = PretrainParams(embed_dim=12, epochs=3)
    a = train_name_embeddings(walks, 3, params, np.random.default_rng(9))
    b = train_name_embeddings(walks, 3, params, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_embeddings_zero_dim_rejected(rng):
    with pytest.raises(ConfigError):
        train_name_embeddings([[0, 1]], 2, PretrainParams(embed_dim=0), rng)


def test_sgns_objective_gradient_matches_finite_differences():
    master = np.random.default_rng(17)
    for _ in range(100):
        n = int(master.integers(3, 7))
        d = int(master.integers(2, 5))
        emb = master.normal(0, 0.5, size=(n, d))
        ctr = int(master.integers(n))
        ctx = int(master.integers(n))
        negs = master.integers(0, n, size=int(master.integers(1, 4)))
        _, grad = sgns_pair_objective(emb, ctr, ctx, negs)
        fd = finite_diff_grad(
            lambda e: sgns_pair_objective(e, ctr, ctx, negs)[0], emb.copy()
        )
        assert np.allclose(grad, fd, rtol=1e-4, atol=1e-8)


def test_init_label_table_shapes_and_determinism():
    emb = np.random.default_rng(2).normal(size=(5, 8))
    a = init_label_table(emb, 5, 16, np.random.default_rng(3))
    b = init_label_table(emb, 5, 16, np.random.default_rng(3))
    assert a.shape == (5, 16)
    assert np.array_equal(a, b)


def test_init_label_table_identical_embeddings_identical_rows(rng):
    emb = np.tile(np.linspace(0, 1, 8), (3, 1))
    table = init_label_table(emb, 3, 4, rng)
    assert np.array_equal(table[0], table[1])
    assert np.array_equal(table[1], table[2])


def test_init_label_table_random_when_disabled(rng):
    table = init_label_table(None, 4, 6, rng)
    assert table.shape == (4, 6)
    assert np.all(np.isfinite(table))


def cluster_corpus(rng, n_segments=200):
    space = make_label_space(
        {
            "A": "alpha",
            "B": "bravo",
            "C": "charlie",
            "D": "delta",
            "E": "echo",
            "F": "foxtrot",
        }
    )
    clusters = [[0, 1, 2], [3, 4, 5]]
    segments = []
    for k in range(n_segments):
        cluster = clusters[k % 2]
        i, j = rng.choice(cluster, size=2, replace=False)
        segments.append(f"the {space.names[i][0]} sits near the {space.names[j][0]}")
    return space, clusters, segments


def test_pipeline_separates_cooccurrence_clusters():
    rng = np.random.default_rng(21)
    space, clusters, segments = cluster_corpus(rng)
    emb = pretrain_name_embeddings(segments, space, PretrainParams(), rng)
    intra, inter = [], []
    for i in range(6):
        for j in range(i + 1, 6):
            same = any(i in c and j in c for c in clusters)
            (intra if same else inter).append(cosine_similarity(emb[i], emb[j]))
    assert np.mean(intra) > np.mean(inter)


def test_pipeline_deterministic_given_seed():
    space, _, segments = cluster_corpus(np.random.default_rng(22))
    a = pretrain_name_embeddings(segments, space, PretrainParams(), np.random.default_rng(4))
    b = pretrain_name_embeddings(segments, space, PretrainParams(), np.random.default_rng(4))
    assert np.array_equal(a, b)


def test_pipeline_warns_when_nothing_cooccurs(rng):
    space = two_label_space()
    with pytest.warns(UserWarning):
        emb = pretrain_name_embeddings(["alpha", "bravo"], space, PretrainParams(), rng)
    assert emb.shape == (2, 64)


def test_label_space_validation():
    with pytest.raises(ConfigError):
        LabelSpace(["a", "a"], [["x"], ["y"]])
    with pytest.raises(ConfigError):
        LabelSpace(["a"], [["x", "y"]], [1])


def test_label_space_file_round_trip(tmp_path):
    space = LabelSpace(["walk", "lie"], [["walking"], ["lying", "down"]], [2, 4])
    path = tmp_path / "labels.tsv"
    save_label_space(space, path)
    loaded = load_label_space(path)
    assert loaded.classes == space.classes
    assert loaded.names == space.names
    assert loaded.windows == space.windows


def test_embeddings_file_round_trip(tmp_path, rng):
    space = two_label_space()
    emb = rng.normal(size=(2, 5))
    path = tmp_path / "emb.txt"
    save_embeddings(space, emb, path)
    assert np.array_equal(load_embeddings(path, space), emb)


def test_embeddings_file_missing_class(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("A 1.0 2.0\n")
    with pytest.raises(DataFormatError):
        load_embeddings(path, two_label_space())
