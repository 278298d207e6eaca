"""Command-line entry point.

Subcommands: ``gen-data``, ``pretrain-labels``, ``run``, ``evaluate``.
All state comes from the config file and flags; no environment variables are
consulted. Exit codes: 0 success, 2 invalid configuration or input, 3
training divergence (partial outputs are still written).
"""

from __future__ import annotations

import argparse
import os
import sys

from fedalign.config import ExperimentConfig, load_config
from fedalign.data import (
    estimate_class_centers,
    generate_corpus_from_centers,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from fedalign.errors import ConfigError, DataFormatError, DivergenceError
from fedalign.experiment import (
    _STREAM_DATA,
    _STREAM_PRETRAIN,
    _stream,
    prepare_data,
    pretrain_embeddings,
    run_experiment,
)
from fedalign.metrics import evaluate
from fedalign.pretrain import save_embeddings, save_label_space
from fedalign.reporting import read_checkpoint, write_history, write_summary


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedalign",
        description="Federated learning with client-exclusive class sets, desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen-data", "generate a synthetic dataset, label file, and corpus"),
        ("pretrain-labels", "pretrain label-name embeddings from a corpus"),
        ("run", "run a federated experiment end to end"),
        ("evaluate", "evaluate a checkpoint against a dataset"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        cfg.seed = args.seed
        cfg.synthetic.seed = args.seed
        cfg.federation.seed = args.seed
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _require_out(cfg: ExperimentConfig) -> str:
    if cfg.output_dir is None:
        raise ConfigError("an output directory is required (--out or output_dir)")
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def _cmd_gen_data(cfg: ExperimentConfig) -> int:
    out = _require_out(cfg)
    train, test = generate_synthetic(cfg.synthetic, _stream(cfg, _STREAM_DATA))
    save_dataset(train, os.path.join(out, "train.txt"))
    save_dataset(test, os.path.join(out, "test.txt"))
    save_label_space(train.space, os.path.join(out, "labels.tsv"))
    centers = estimate_class_centers(train)
    corpus = generate_corpus_from_centers(
        centers, train.space, cfg.pretrain.segments, _stream(cfg, _STREAM_PRETRAIN)
    )
    with open(os.path.join(out, "corpus.txt"), "w", encoding="utf-8") as fh:
        for segment in corpus:
            fh.write(segment + "\n")
    print(f"wrote train/test/labels/corpus to {out}")
    return 0


def _cmd_pretrain_labels(cfg: ExperimentConfig) -> int:
    out = _require_out(cfg)
    train, _ = prepare_data(cfg)
    emb = pretrain_embeddings(cfg, train)
    path = os.path.join(out, "embeddings.txt")
    save_embeddings(train.space, emb, path)
    print(f"wrote {emb.shape[0]} x {emb.shape[1]} embeddings to {path}")
    return 0


def _cmd_run(cfg: ExperimentConfig) -> int:
    out = _require_out(cfg)
    try:
        result = run_experiment(cfg, out)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        if exc.history:
            write_history(exc.history, os.path.join(out, "history.csv"))
        write_summary({"status": "diverged", "detail": str(exc)}, os.path.join(out, "summary.txt"))
        return 3
    print(
        f"done: {cfg.federation.rounds} rounds, "
        f"macro_f1 {result.report.macro_f1:.4f}, "
        f"macro_acc {result.report.macro_accuracy:.4f} -> {out}"
    )
    return 0


def _cmd_evaluate(cfg: ExperimentConfig) -> int:
    if cfg.eval_checkpoint is None or cfg.eval_dataset is None:
        raise ConfigError("[evaluate] needs 'checkpoint' and 'dataset' paths")
    model, round_idx = read_checkpoint(cfg.eval_checkpoint)
    data = load_dataset(cfg.eval_dataset)
    report = evaluate(model, data)
    print(f"checkpoint round {round_idx}, {data.n_samples} samples")
    for c, cid in enumerate(data.space.classes):
        print(
            f"  {cid}: precision {report.precision[c]:.4f} recall {report.recall[c]:.4f} "
            f"f1 {report.f1[c]:.4f} accuracy {report.accuracy[c]:.4f}"
        )
    print(f"macro_f1 {report.macro_f1:.6f}")
    print(f"macro_acc {report.macro_accuracy:.6f}")
    if cfg.output_dir is not None:
        os.makedirs(cfg.output_dir, exist_ok=True)
        write_summary(
            {
                "checkpoint_round": round_idx,
                "macro_f1": f"{report.macro_f1:.6f}",
                "macro_acc": f"{report.macro_accuracy:.6f}",
            },
            os.path.join(cfg.output_dir, "metrics.txt"),
        )
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "pretrain-labels": _cmd_pretrain_labels,
    "run": _cmd_run,
    "evaluate": _cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
