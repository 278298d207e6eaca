"""Label-name embedding pretraining from a domain corpus.

Pipeline: find label-name occurrences per text segment, compute pointwise
mutual information between names, build a co-occurrence graph with
mean-centered PMI weights, simulate weighted random walks, and train name
embeddings with skip-gram negative sampling. The result seeds the global
label table through a one-shot hidden-layer projection.
"""

from __future__ import annotations

import re
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from fedalign import backend
from fedalign.errors import ConfigError, DataFormatError

_TOKEN_RE = re.compile(r"[0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs. No stemming."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class LabelSpace:
    """Ordered class identifiers with their natural-language names.

    ``windows[c]`` is the sliding-window length used when matching class c's
    name in a text segment; it defaults to twice the name's word count and
    must not be shorter than the name.
    """

    classes: list[str]
    names: list[list[str]]
    windows: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise ConfigError("class identifiers must be unique")
        if len(self.names) != len(self.classes):
            raise ConfigError("one name per class required")
        if not self.windows:
            self.windows = [2 * len(n) for n in self.names]
        if len(self.windows) != len(self.classes):
            raise ConfigError("one window length per class required")
        for cid, name, w in zip(self.classes, self.names, self.windows):
            if not name:
                raise ConfigError(f"class {cid!r} has an empty name")
            if w < len(name):
                raise ConfigError(f"class {cid!r}: window {w} shorter than its name")

    def __len__(self) -> int:
        return len(self.classes)

    def index_of(self, class_id: str) -> int:
        return self.classes.index(class_id)


def make_label_space(names_by_class: dict[str, str]) -> LabelSpace:
    """LabelSpace from {class id: name phrase}, tokenizing the names."""
    classes = list(names_by_class)
    names = [tokenize(names_by_class[c]) for c in classes]
    return LabelSpace(classes, names)


def load_label_space(path) -> LabelSpace:
    """Parse the labels file: one class per line, tab separated
    ``id<TAB>name words[<TAB>window]``."""
    classes: list[str] = []
    names: list[list[str]] = []
    windows: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise DataFormatError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
            classes.append(parts[0].strip())
            name = tokenize(parts[1])
            if not name:
                raise DataFormatError(f"{path}:{lineno}: empty label name")
            names.append(name)
            if len(parts) == 3:
                try:
                    windows.append(int(parts[2]))
                except ValueError as exc:
                    raise DataFormatError(f"{path}:{lineno}: bad window length") from exc
            else:
                windows.append(2 * len(name))
    if not classes:
        raise DataFormatError(f"{path}: no classes found")
    return LabelSpace(classes, names, windows)


def save_label_space(space: LabelSpace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cid, name, w in zip(space.classes, space.names, space.windows):
            fh.write(f"{cid}\t{' '.join(name)}\t{w}\n")


def load_corpus(path) -> list[str]:
    """UTF-8 plain text, one segment per line; blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def match_label_in_segment(segment: list[str], label_name: list[str], window: int) -> bool:
    """True iff some window of ``window`` consecutive segment words covers the
    label name as a word multiset (order-free; repeated name words must appear
    as often within the window)."""
    need = Counter(label_name)
    if len(segment) <= window:
        spans = [segment]
    else:
        spans = [segment[i : i + window] for i in range(len(segment) - window + 1)]
    for span in spans:
        have = Counter(span)
        if all(have[w] >= k for w, k in need.items()):
            return True
    return False


@dataclass
class CooccurrenceCounts:
    """Per-segment presence counts: a name occurring twice in one segment
    still counts once."""

    segment_count: int
    counts: np.ndarray  # (C,) segments where each name matched
    joint: np.ndarray  # (C, C) symmetric, segments where both matched


def count_cooccurrences(segments, space: LabelSpace) -> CooccurrenceCounts:
    """Scan tokenized or raw segments for label-name occurrences."""
    n = len(space)
    counts = np.zeros(n, dtype=np.int64)
    joint = np.zeros((n, n), dtype=np.int64)
    total = 0
    for seg in segments:
        words = tokenize(seg) if isinstance(seg, str) else list(seg)
        total += 1
        hits = [
            i
            for i in range(n)
            if match_label_in_segment(words, space.names[i], space.windows[i])
        ]
        for a, i in enumerate(hits):
            counts[i] += 1
            for j in hits[a + 1 :]:
                joint[i, j] += 1
                joint[j, i] += 1
    if total == 0:
        raise DataFormatError("empty corpus: occurrence probabilities are undefined")
    return CooccurrenceCounts(total, counts, joint)


def pmi(counts: CooccurrenceCounts) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise mutual information log(p(i,j) / (p(i) p(j))) per distinct pair.

    Returns (values, present); pairs with zero joint probability are absent
    and so is the diagonal.
    """
    n = counts.counts.shape[0]
    total = float(counts.segment_count)
    p_single = counts.counts / total
    values = np.zeros((n, n))
    present = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if counts.joint[i, j] > 0:
                p_joint = counts.joint[i, j] / total
                v = np.log(p_joint / (p_single[i] * p_single[j]))
                values[i, j] = values[j, i] = v
                present[i, j] = present[j, i] = True
    return values, present


@dataclass
class CooccurrenceGraph:
    """Undirected label-name graph with positive weights and no self-loops.

    ``neighbors[u]`` / ``weights[u]`` list u's adjacency in ascending node
    order; ``probs[u]`` are the normalized transition probabilities.
    """

    n_nodes: int
    neighbors: list[np.ndarray]
    weights: list[np.ndarray]

    @property
    def probs(self) -> list[np.ndarray]:
        return [w / w.sum() if w.size else w for w in self.weights]

    @property
    def n_edges(self) -> int:
        return sum(len(nb) for nb in self.neighbors) // 2


def build_cooccurrence_graph(values: np.ndarray, present: np.ndarray) -> CooccurrenceGraph:
    """Zero-center the present PMI values by their mean and keep strictly
    positive weights as edges (weight <= 0 is unreachable under normalized
    transitions anyway)."""
    n = values.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    keep = present[iu, ju]
    if not keep.any():
        raise ConfigError("no present PMI entries: cannot build a graph")
    mean = values[iu, ju][keep].mean()
    neighbors: list[list[int]] = [[] for _ in range(n)]
    weights: list[list[float]] = [[] for _ in range(n)]
    for i, j in zip(iu[keep], ju[keep]):
        w = values[i, j] - mean
        if w > 0.0:
            neighbors[i].append(j)
            weights[i].append(w)
            neighbors[j].append(i)
            weights[j].append(w)
    graph = CooccurrenceGraph(
        n,
        [np.asarray(nb, dtype=np.int64) for nb in neighbors],
        [np.asarray(w, dtype=np.float64) for w in weights],
    )
    if graph.n_edges == 0:
        warnings.warn(
            "all co-occurrence edges were dropped after centering; "
            "embeddings will keep their random initialization",
            stacklevel=2,
        )
    return graph


def simulate_walks(
    graph: CooccurrenceGraph,
    walk_length: int,
    walks_per_node: int,
    rng: np.random.Generator,
) -> list[list[int]]:
    """Fixed-length weighted random walks, ``walks_per_node`` from each node.

    Each step moves to a neighbor with probability proportional to the edge
    weight; a node without edges ends the walk early.
    """
    if walk_length < 1:
        raise ConfigError("walk_length must be at least 1")
    cum = [np.cumsum(p) for p in graph.probs]
    walks = []
    for start in range(graph.n_nodes):
        for _ in range(walks_per_node):
            walk = [start]
            node = start
            while len(walk) < walk_length:
                c = cum[node]
                if c.size == 0:
                    break
                node = int(graph.neighbors[node][np.searchsorted(c, rng.random())])
                walk.append(node)
            walks.append(walk)
    return walks


@dataclass
class PretrainParams:
    """Knobs for the embedding pretraining pipeline (all configurable)."""

    embed_dim: int = 64
    walk_length: int = 10
    walks_per_node: int = 10
    context_window: int = 5
    negatives_per_positive: int = 5
    epochs: int = 5
    lr: float = 0.025


def walk_pairs(walks: list[list[int]], context_window: int) -> np.ndarray:
    """(center, context) index pairs within the window along each walk.

    A walk revisiting its center within the window does not pair the node
    with itself; neighborhoods contain other nodes only.
    """
    pairs = []
    for walk in walks:
        for i, center in enumerate(walk):
            lo = max(0, i - context_window)
            hi = min(len(walk), i + context_window + 1)
            for j in range(lo, hi):
                if j != i and walk[j] != center:
                    pairs.append((center, walk[j]))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    return np.asarray(pairs, dtype=np.int64)


def train_name_embeddings(
    walks: list[list[int]],
    n_nodes: int,
    params: PretrainParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Skip-gram negative-sampling embeddings from the walk corpus.

    One sequential gradient step per (center, context) pair: pull the context
    toward the center, push ``negatives_per_positive`` negatives away.
    Negatives are drawn uniformly from the nodes appearing in the walks, so
    nodes absent from every walk keep their random initialization.
    Deterministic given the generator state.
    """
    if params.embed_dim <= 0:
        raise ConfigError("embedding dimension must be positive")
    d = params.embed_dim
    emb = rng.uniform(-0.5 / d, 0.5 / d, (n_nodes, d))
    pairs = walk_pairs(walks, params.context_window)
    if pairs.shape[0] == 0:
        return emb
    vocab = np.unique(np.concatenate([np.asarray(w, dtype=np.int64) for w in walks]))
    k = backend.kernels()
    for _ in range(params.epochs):
        draws = rng.integers(0, vocab.size, (pairs.shape[0], params.negatives_per_positive))
        negs = vocab[draws]
        k.sgns_train(emb, pairs, np.ascontiguousarray(negs, dtype=np.int64), params.lr)
    return emb


def sgns_pair_objective(
    emb: np.ndarray, center: int, context: int, negatives: np.ndarray
) -> tuple[float, np.ndarray]:
    """Loss and exact full-table gradient of one pair's negative-sampling
    objective (negatives hitting the pair's own nodes are skipped, as in the
    training kernels). Reference implementation for gradient checks,
    independent of the training kernels."""

    def sigm(v: float) -> float:
        return 1.0 / (1.0 + np.exp(-v)) if v >= 0 else np.exp(v) / (1.0 + np.exp(v))

    grad = np.zeros_like(emb)
    c = emb[center]
    x = float(emb[context] @ c)
    s = sigm(x)
    loss = -np.log(max(s, 1e-12))
    grad[context] += -(1.0 - s) * c
    grad[center] += -(1.0 - s) * emb[context]
    for n in negatives:
        if n == center or n == context:
            continue
        x = float(emb[n] @ c)
        s = sigm(x)
        loss -= np.log(max(1.0 - s, 1e-12))
        grad[n] += s * c
        grad[center] += s * emb[n]
    return loss, grad


def init_label_table(
    name_embeddings: np.ndarray | None,
    n_classes: int,
    rep_dim: int,
    rng: np.random.Generator,
    hidden_dim: int = 64,
) -> np.ndarray:
    """Initial label table, one row per class in representation space.

    With pretrained name embeddings the rows come from a randomly initialized
    single-hidden-layer projection applied once; without them (semantic
    sharing disabled) the rows are small random vectors.
    """
    if rep_dim < 1:
        raise ConfigError("representation dimension must be at least 1")
    if name_embeddings is None:
        return rng.normal(0.0, 1.0 / np.sqrt(rep_dim), (n_classes, rep_dim))
    if name_embeddings.shape[0] != n_classes:
        raise ConfigError("one name embedding per class required")
    d_emb = name_embeddings.shape[1]
    w1 = rng.normal(0.0, 1.0 / np.sqrt(d_emb), (hidden_dim, d_emb))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), (rep_dim, hidden_dim))
    hidden = np.tanh(name_embeddings @ w1.T)
    return hidden @ w2.T


def pretrain_name_embeddings(
    segments,
    space: LabelSpace,
    params: PretrainParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Full pipeline: counts -> PMI -> graph -> walks -> SGNS embeddings."""
    counts = count_cooccurrences(segments, space)
    values, present = pmi(counts)
    if not present.any():
        warnings.warn(
            "no label pair ever co-occurs; embeddings stay at random initialization",
            stacklevel=2,
        )
        d = params.embed_dim
        return rng.uniform(-0.5 / d, 0.5 / d, (len(space), d))
    graph = build_cooccurrence_graph(values, present)
    walks = simulate_walks(graph, params.walk_length, params.walks_per_node, rng)
    return train_name_embeddings(walks, len(space), params, rng)


def save_embeddings(space: LabelSpace, emb: np.ndarray, path) -> None:
    """One class per line: id followed by the embedding entries."""
    with open(path, "w", encoding="utf-8") as fh:
        for cid, row in zip(space.classes, emb):
            fh.write(cid + " " + " ".join(repr(float(v)) for v in row) + "\n")


def load_embeddings(path, space: LabelSpace) -> np.ndarray:
    rows: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                vec = np.asarray([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: bad embedding value") from exc
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise DataFormatError(f"{path}:{lineno}: inconsistent embedding dimension")
            rows[parts[0]] = vec
    missing = [c for c in space.classes if c not in rows]
    if missing:
        raise DataFormatError(f"{path}: missing embeddings for classes {missing}")
    return np.stack([rows[c] for c in space.classes])
