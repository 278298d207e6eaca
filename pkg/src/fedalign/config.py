"""Experiment configuration: flat key-value text with section headers.

Every knob has a default mirroring the shipped experiment setup; the seed is
the one mandatory field. Unknown sections or keys are rejected so that typos
cannot silently change an experiment.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from fedalign.client import ClientConfig
from fedalign.data import SyntheticSpec
from fedalign.errors import ConfigError
from fedalign.model import TASK_KINDS
from fedalign.pretrain import PretrainParams
from fedalign.server import FederationConfig

_KNOWN_KEYS = {
    "experiment": {"seed", "method", "output_dir"},
    "data": {"source", "train", "test", "labels"},
    "synthetic": {
        "classes",
        "samples_per_class",
        "feature_dim",
        "center_spread",
        "noise_scale",
        "task",
        "positives_per_sample",
    },
    "partition": {"scheme", "clients", "groups", "identified_per_client"},
    "federation": {
        "rounds",
        "clients_per_round",
        "eval_every",
        "checkpoint_every",
        "weight_by_samples",
    },
    "client": {
        "local_epochs",
        "lr",
        "batch_size",
        "distill_weight",
        "pos_percentile",
        "neg_percentile",
        "prox_mu",
        "fedrs_alpha",
        "distill_every_epoch",
        "no_semantic",
        "no_distillation",
        "no_alternation",
    },
    "model": {"rep_dim", "hidden_dim", "activation"},
    "pretrain": {
        "enabled",
        "corpus",
        "segments",
        "embed_dim",
        "walk_length",
        "walks_per_node",
        "context_window",
        "negatives",
        "epochs",
        "lr",
        "projection_hidden_dim",
        "embeddings",
    },
    "evaluate": {"checkpoint", "dataset"},
}


@dataclass
class PretrainSettings:
    enabled: bool = True
    corpus: str = "synthetic"  # "synthetic" or a file path
    segments: int = 200
    params: PretrainParams = field(default_factory=PretrainParams)
    projection_hidden_dim: int = 64
    embeddings: str | None = None  # optional precomputed embedding file


@dataclass
class ExperimentConfig:
    seed: int
    output_dir: str | None = None
    data_source: str = "synthetic"  # "synthetic" or "files"
    train_path: str | None = None
    test_path: str | None = None
    labels_path: str | None = None
    synthetic: SyntheticSpec = field(
        default_factory=lambda: SyntheticSpec(6, 3, 40, 8)
    )
    partition_scheme: str = "class_groups"
    n_clients: int = 3
    groups: list[list[int]] | None = None
    identified_per_client: int = 2
    federation: FederationConfig = field(default_factory=FederationConfig)
    rep_dim: int = 256
    hidden_dim: int = 64
    activation: str = "relu"
    pretrain: PretrainSettings = field(default_factory=PretrainSettings)
    eval_checkpoint: str | None = None
    eval_dataset: str | None = None

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.data_source not in ("synthetic", "files"):
            raise ConfigError("data source must be 'synthetic' or 'files'")
        if self.partition_scheme not in (
            "class_groups",
            "random_identified",
            "uniform_groups",
        ):
            raise ConfigError(
                "partition scheme must be 'class_groups', 'random_identified', "
                "or 'uniform_groups'"
            )
        if self.data_source == "files":
            for label, p in (("train", self.train_path), ("test", self.test_path)):
                if p is None:
                    raise ConfigError(f"data source 'files' needs a {label} path")
                if not os.path.exists(p):
                    raise ConfigError(f"{label} dataset file not found: {p}")
        if self.pretrain.corpus != "synthetic" and not os.path.exists(self.pretrain.corpus):
            raise ConfigError(f"corpus file not found: {self.pretrain.corpus}")


def _parse_groups(text: str) -> list[list[int]]:
    groups = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            raise ConfigError("empty class group in 'groups'")
        try:
            groups.append([int(v) for v in part.split(",")])
        except ValueError as exc:
            raise ConfigError(f"bad class index in groups: {part!r}") from exc
    return groups


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")

    def get(section, key, cast=str, default=None):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            if cast is bool:
                return parser.getboolean(section, key)
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {section}.{key}: {raw!r}") from exc

    if not parser.has_option("experiment", "seed"):
        raise ConfigError(f"{path}: [experiment] seed is mandatory")
    seed = get("experiment", "seed", int)

    task = get("synthetic", "task", str, "single_label")
    if task not in TASK_KINDS:
        raise ConfigError(f"{path}: unknown task {task!r}")
    synthetic = SyntheticSpec(
        n_classes=get("synthetic", "classes", int, 6),
        n_clients=get("partition", "clients", int, 3),
        samples_per_class=get("synthetic", "samples_per_class", int, 40),
        feature_dim=get("synthetic", "feature_dim", int, 8),
        center_spread=get("synthetic", "center_spread", float, 3.0),
        noise_scale=get("synthetic", "noise_scale", float, 1.0),
        task=task,
        positives_per_sample=get("synthetic", "positives_per_sample", int, 2),
        seed=seed,
    )

    client = ClientConfig(
        local_epochs=get("client", "local_epochs", int, 5),
        lr=get("client", "lr", float, 0.01),
        batch_size=get("client", "batch_size", int, 32),
        method=get("experiment", "method", str, "fedalign"),
        distill_weight=get("client", "distill_weight", float, 1.0),
        pos_percentile=get("client", "pos_percentile", float, 95.0),
        neg_percentile=get("client", "neg_percentile", float, 5.0),
        prox_mu=get("client", "prox_mu", float, 0.0),
        fedrs_alpha=get("client", "fedrs_alpha", float, 0.5),
        no_semantic=get("client", "no_semantic", bool, False),
        no_distillation=get("client", "no_distillation", bool, False),
        no_alternation=get("client", "no_alternation", bool, False),
        distill_every_epoch=get("client", "distill_every_epoch", bool, True),
    )
    federation = FederationConfig(
        rounds=get("federation", "rounds", int, 50),
        clients_per_round=get("federation", "clients_per_round", int, 5),
        seed=seed,
        client=client,
        eval_every=get("federation", "eval_every", int, 1),
        checkpoint_every=get("federation", "checkpoint_every", int, 0),
        weight_by_samples=get("federation", "weight_by_samples", bool, False),
    )
    pretrain = PretrainSettings(
        enabled=get("pretrain", "enabled", bool, True),
        corpus=get("pretrain", "corpus", str, "synthetic"),
        segments=get("pretrain", "segments", int, 200),
        params=PretrainParams(
            embed_dim=get("pretrain", "embed_dim", int, 64),
            walk_length=get("pretrain", "walk_length", int, 10),
            walks_per_node=get("pretrain", "walks_per_node", int, 10),
            context_window=get("pretrain", "context_window", int, 5),
            negatives_per_positive=get("pretrain", "negatives", int, 5),
            epochs=get("pretrain", "epochs", int, 5),
            lr=get("pretrain", "lr", float, 0.025),
        ),
        projection_hidden_dim=get("pretrain", "projection_hidden_dim", int, 64),
        embeddings=get("pretrain", "embeddings", str, None),
    )
    groups_text = get("partition", "groups", str, None)
    return ExperimentConfig(
        seed=seed,
        output_dir=get("experiment", "output_dir", str, None),
        data_source=get("data", "source", str, "synthetic"),
        train_path=get("data", "train", str, None),
        test_path=get("data", "test", str, None),
        labels_path=get("data", "labels", str, None),
        synthetic=synthetic,
        partition_scheme=get("partition", "scheme", str, "class_groups"),
        n_clients=get("partition", "clients", int, 3),
        groups=_parse_groups(groups_text) if groups_text else None,
        identified_per_client=get("partition", "identified_per_client", int, 2),
        federation=federation,
        rep_dim=get("model", "rep_dim", int, 256),
        hidden_dim=get("model", "hidden_dim", int, 64),
        activation=get("model", "activation", str, "relu"),
        pretrain=pretrain,
        eval_checkpoint=get("evaluate", "checkpoint", str, None),
        eval_dataset=get("evaluate", "dataset", str, None),
    )
