"""Datasets: representation, file format, synthetic generation, partitioning.

Partitioners turn a fully labeled dataset into per-client views whose labels
are known only on that client's identified classes, following either the
class-group splitting procedure or random identified-class assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedalign.client import ClientDataset
from fedalign.errors import ConfigError, DataFormatError
from fedalign.model import MULTI_LABEL, SINGLE_LABEL, TASK_KINDS, UNKNOWN
from fedalign.pretrain import LabelSpace

_NAME_WORDS = (
    "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo lima "
    "mike november oscar papa quebec romeo sierra tango uniform victor whiskey "
    "xray yankee zulu"
).split()

_FILLER_WORDS = (
    "the and near with over under while again during quiet early often slowly "
    "bright still"
).split()


@dataclass
class Dataset:
    """Fully labeled dataset over the universal class set."""

    features: np.ndarray
    labels: np.ndarray  # (n, C) in {0, 1}, ground truth for every class
    space: LabelSpace
    task: str
    subjects: np.ndarray | None = None

    def __post_init__(self):
        if self.task not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.task!r}")
        if self.labels.shape != (self.features.shape[0], len(self.space)):
            raise ConfigError("label matrix shape does not match features/classes")
        if self.task == SINGLE_LABEL and self.labels.size and np.any(self.labels.sum(axis=1) != 1):
            raise ConfigError("single-label data needs exactly one positive per sample")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.space)


@dataclass
class SyntheticSpec:
    """Gaussian-cluster stand-in for the real benchmark datasets."""

    n_classes: int
    n_clients: int
    samples_per_class: int
    feature_dim: int
    center_spread: float = 3.0
    noise_scale: float = 1.0
    task: str = SINGLE_LABEL
    positives_per_sample: int = 2
    seed: int = 0

    def __post_init__(self):
        if min(self.n_classes, self.n_clients, self.samples_per_class, self.feature_dim) < 1:
            raise ConfigError("all synthetic counts must be at least 1")
        if self.center_spread <= 0:
            raise ConfigError("center_spread must be positive")
        if self.task not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.task!r}")


def synthetic_label_space(n_classes: int) -> LabelSpace:
    """Single-word class names, readable for small class counts."""
    names = []
    for i in range(n_classes):
        if i < len(_NAME_WORDS):
            names.append([_NAME_WORDS[i]])
        else:
            names.append([f"label{i}"])
    return LabelSpace([f"c{i}" for i in range(n_classes)], names)


def generate_synthetic(
    spec: SyntheticSpec, rng: np.random.Generator
) -> tuple[Dataset, Dataset]:
    """Sample a train/test dataset pair with an 80/20 split.

    Single-label samples sit on their class center plus noise; multi-label
    samples sit on the mean of their positive classes' centers plus noise.
    """
    space = synthetic_label_space(spec.n_classes)
    centers = rng.normal(0.0, spec.center_spread, (spec.n_classes, spec.feature_dim))
    n = spec.n_classes * spec.samples_per_class
    labels = np.zeros((n, spec.n_classes), dtype=np.int8)
    if spec.task == SINGLE_LABEL:
        base = np.repeat(centers, spec.samples_per_class, axis=0)
        for c in range(spec.n_classes):
            labels[c * spec.samples_per_class : (c + 1) * spec.samples_per_class, c] = 1
    else:
        k = min(spec.positives_per_sample, spec.n_classes)
        base = np.empty((n, spec.feature_dim))
        for i in range(n):
            pos = rng.choice(spec.n_classes, size=k, replace=False)
            labels[i, pos] = 1
            base[i] = centers[pos].mean(axis=0)
    features = base + rng.normal(0.0, spec.noise_scale, base.shape)
    perm = rng.permutation(n)
    n_train = int(round(0.8 * n))
    tr, te = perm[:n_train], perm[n_train:]
    train = Dataset(features[tr], labels[tr], space, spec.task)
    test = Dataset(features[te], labels[te], space, spec.task)
    return train, test


def estimate_class_centers(data: Dataset) -> np.ndarray:
    """Mean feature vector over each class's positive samples (zero row for a
    class with no positives)."""
    centers = np.zeros((data.n_classes, data.features.shape[1]))
    for c in range(data.n_classes):
        rows = np.flatnonzero(data.labels[:, c] == 1)
        if rows.size:
            centers[c] = data.features[rows].mean(axis=0)
    return centers


def generate_corpus_from_centers(
    centers: np.ndarray,
    space: LabelSpace,
    n_segments: int,
    rng: np.random.Generator,
) -> list[str]:
    """Synthetic domain corpus whose label co-occurrence mirrors geometry.

    Each segment mentions one class name, or a pair of names sampled with
    probability decaying in the squared distance between their class
    centers, embedded in filler words. Close classes therefore end up with
    high PMI, the way related concepts co-occur in a real corpus.
    """
    n = centers.shape[0]
    if n < 2:
        raise ConfigError("need at least two classes for a co-occurrence corpus")
    diff = centers[:, None, :] - centers[None, :, :]
    dist2 = (diff * diff).sum(axis=2)
    nn = np.sqrt(np.min(dist2 + np.where(np.eye(n, dtype=bool), np.inf, 0.0), axis=1))
    bandwidth = float(np.median(nn))
    weights = np.exp(-dist2 / (bandwidth * bandwidth))
    np.fill_diagonal(weights, 0.0)
    segments = []
    for _ in range(n_segments):
        i = int(rng.integers(n))
        words = list(rng.choice(_FILLER_WORDS, size=3))
        words += space.names[i]
        if rng.random() < 0.8:
            p = weights[i] / weights[i].sum()
            j = int(rng.choice(n, p=p))
            words += list(rng.choice(_FILLER_WORDS, size=2))
            words += space.names[j]
        segments.append(" ".join(words))
    return segments


def _forced_assignment(
    labels: np.ndarray, owner: np.ndarray, n_clients: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-sample client assignment by the most infrequent positive class."""
    freq = labels.sum(axis=0)
    out = np.empty(labels.shape[0], dtype=np.intp)
    for i in range(labels.shape[0]):
        pos = np.flatnonzero(labels[i])
        if pos.size == 0:
            out[i] = int(rng.integers(n_clients))  # unlabeled sample, no anchor class
        else:
            best = min(pos.tolist(), key=lambda c: (freq[c], c))
            out[i] = owner[best]
    return out


def _client_view(
    data: Dataset, rows: np.ndarray, identified: np.ndarray, client_id: int
) -> ClientDataset:
    tri = np.full((rows.size, data.n_classes), UNKNOWN, dtype=np.int8)
    tri[:, identified] = data.labels[np.ix_(rows, identified)]
    subjects = data.subjects[rows] if data.subjects is not None else None
    return ClientDataset(
        client_id=client_id,
        features=data.features[rows],
        labels=tri,
        identified=identified,
        n_classes=data.n_classes,
        subjects=subjects,
    )


def partition_by_class_groups(
    data: Dataset,
    n_clients: int,
    initial_groups: list[list[int]],
    rng: np.random.Generator,
) -> list[ClientDataset]:
    """Split class groups until there is one per client, then assign samples.

    The largest group is repeatedly cut at a random point of a shuffled class
    list. Every sample follows its most infrequent positive class (global
    frequency, ties to the lowest class index); subjects stay together by
    majority vote. Fails if some identified class ends up with no positive
    sample at its client.
    """
    groups = [sorted(set(g)) for g in initial_groups]
    flat = [c for g in groups for c in g]
    if len(flat) != len(set(flat)) or sorted(flat) != list(range(data.n_classes)):
        raise ConfigError("initial groups must partition the class set")
    if any(not g for g in groups):
        raise ConfigError("initial groups must be non-empty")
    if n_clients < len(groups):
        raise ConfigError("fewer clients than initial groups")
    if data.n_classes < n_clients:
        raise ConfigError("cannot give every client a non-empty class group")

    while len(groups) < n_clients:
        sizes = [len(g) for g in groups]
        gi = int(np.argmax(sizes))
        g = groups.pop(gi)
        if len(g) < 2:
            raise ConfigError("largest group has a single class, cannot split further")
        shuffled = [g[int(i)] for i in rng.permutation(len(g))]
        cut = int(rng.integers(1, len(g)))  # both sides non-empty by construction
        groups.append(sorted(shuffled[:cut]))
        groups.append(sorted(shuffled[cut:]))

    owner = np.empty(data.n_classes, dtype=np.intp)
    for m, g in enumerate(groups):
        owner[np.asarray(g, dtype=np.intp)] = m
    assign = _forced_assignment(data.labels, owner, n_clients, rng)

    if data.subjects is not None:
        for s in np.unique(data.subjects):
            rows = np.flatnonzero(data.subjects == s)
            votes = np.bincount(assign[rows], minlength=n_clients)
            assign[rows] = int(np.argmax(votes))  # argmax ties break low

    clients = []
    for m, g in enumerate(groups):
        rows = np.flatnonzero(assign == m)
        identified = np.asarray(g, dtype=np.intp)
        view = _client_view(data, rows, identified, m)
        pos_per_class = (view.labels[:, identified] == 1).sum(axis=0)
        if np.any(pos_per_class == 0):
            missing = [data.space.classes[c] for c in identified[pos_per_class == 0]]
            raise ConfigError(
                f"partition failed: classes {missing} have no positive sample "
                f"at client {m}"
            )
        clients.append(view)
    return clients


def _uniform_shards(data: Dataset, n_clients: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Near-equal random shards; a subject's samples stay in one shard."""
    if data.subjects is not None:
        subjects = np.unique(data.subjects)
        order = subjects[rng.permutation(subjects.size)]
        buckets: list[list[int]] = [[] for _ in range(n_clients)]
        for pos, s in enumerate(order):
            buckets[pos % n_clients].extend(np.flatnonzero(data.subjects == s).tolist())
        return [np.asarray(sorted(b), dtype=np.intp) for b in buckets]
    perm = rng.permutation(data.n_samples)
    return [np.sort(part) for part in np.array_split(perm, n_clients)]


def partition_random_identified(
    data: Dataset, n_clients: int, k: int, rng: np.random.Generator
) -> list[ClientDataset]:
    """Uniform data shards (subject-respecting when ids exist) with k
    identified classes drawn per client; class sets may overlap."""
    if k > data.n_classes:
        raise ConfigError("more identified classes requested than classes exist")
    if n_clients < 1:
        raise ConfigError("need at least one client")
    shards = _uniform_shards(data, n_clients, rng)
    clients = []
    for m, rows in enumerate(shards):
        identified = np.sort(rng.choice(data.n_classes, size=k, replace=False))
        clients.append(_client_view(data, rows, identified.astype(np.intp), m))
    return clients


def partition_uniform_groups(
    data: Dataset, groups: list[list[int]], rng: np.random.Generator
) -> list[ClientDataset]:
    """Uniform data shards with fixed disjoint identified class sets.

    Unlike class-group partitioning, samples are spread evenly, so every
    client holds unlabeled data from its unaware classes.
    """
    flat = [c for g in groups for c in g]
    if len(flat) != len(set(flat)) or not all(0 <= c < data.n_classes for c in flat):
        raise ConfigError("groups must be disjoint and within the class range")
    shards = _uniform_shards(data, len(groups), rng)
    return [
        _client_view(data, rows, np.asarray(sorted(g), dtype=np.intp), m)
        for m, (rows, g) in enumerate(zip(shards, groups))
    ]


def identified_coverage(clients: list[ClientDataset], n_classes: int) -> np.ndarray:
    """Class indices no client identifies (should be empty; reported if not)."""
    covered = np.zeros(n_classes, dtype=bool)
    for c in clients:
        covered[c.identified] = True
    return np.flatnonzero(~covered)


def save_dataset(data: Dataset, path) -> None:
    """Plain-text table, bit-exact across platforms (repr round-trip floats)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fedalign-dataset 1\n")
        fh.write(f"task {data.task}\n")
        fh.write(f"feature_dim {data.features.shape[1]}\n")
        fh.write("classes " + " ".join(data.space.classes) + "\n")
        fh.write(f"has_subjects {1 if data.subjects is not None else 0}\n")
        fh.write(f"samples {data.n_samples}\n")
        for i in range(data.n_samples):
            cols = []
            if data.subjects is not None:
                cols.append(str(int(data.subjects[i])))
            cols += [repr(float(v)) for v in data.features[i]]
            cols += [str(int(v)) for v in data.labels[i]]
            fh.write(" ".join(cols) + "\n")


def load_dataset(path, space: LabelSpace | None = None) -> Dataset:
    """Parse the dataset file, validating every invariant with line numbers.

    The file stores class ids only; pass a LabelSpace to attach names (its
    classes must match), otherwise ids double as single-word names.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    def fail(lineno: int, msg: str):
        raise DataFormatError(f"{path}:{lineno}: {msg}")

    if not lines or lines[0] != "fedalign-dataset 1":
        fail(1, "missing 'fedalign-dataset 1' header")
    header: dict[str, str] = {}
    for off, key in enumerate(("task", "feature_dim", "classes", "has_subjects", "samples")):
        lineno = 2 + off
        if lineno > len(lines) or not lines[lineno - 1].startswith(key + " "):
            fail(lineno, f"expected '{key} ...'")
        header[key] = lines[lineno - 1][len(key) + 1 :]
    task = header["task"]
    if task not in TASK_KINDS:
        fail(2, f"unknown task kind {task!r}")
    try:
        dim = int(header["feature_dim"])
        n = int(header["samples"])
        has_subjects = int(header["has_subjects"]) == 1
    except ValueError:
        fail(3, "bad integer in header")
    classes = header["classes"].split()
    if not classes or len(set(classes)) != len(classes):
        fail(4, "class ids must be unique and non-empty")
    if space is not None:
        if space.classes != classes:
            fail(4, "class ids do not match the provided label space")
    else:
        space = LabelSpace(classes, [[c.lower()] for c in classes])
    n_cols = (1 if has_subjects else 0) + dim + len(classes)
    body = lines[6:]
    if len(body) != n:
        fail(6, f"expected {n} sample lines, found {len(body)}")
    features = np.empty((n, dim))
    labels = np.empty((n, len(classes)), dtype=np.int8)
    subjects = np.empty(n, dtype=np.int64) if has_subjects else None
    for i, line in enumerate(body):
        lineno = 7 + i
        parts = line.split()
        if len(parts) != n_cols:
            fail(lineno, f"expected {n_cols} columns, found {len(parts)}")
        pos = 0
        if has_subjects:
            subjects[i] = int(parts[0])
            pos = 1
        try:
            features[i] = [float(v) for v in parts[pos : pos + dim]]
        except ValueError:
            fail(lineno, "bad feature value")
        lab = parts[pos + dim :]
        if any(v not in ("0", "1") for v in lab):
            fail(lineno, "label states must be 0 or 1")
        labels[i] = [int(v) for v in lab]
        if task == SINGLE_LABEL and labels[i].sum() != 1:
            fail(lineno, "single-label sample must have exactly one positive")
    return Dataset(features, labels, space, task, subjects)
