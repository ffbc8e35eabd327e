"""Command line interface.

Subcommands cover the full workflow: preprocess (CSV records -> beat dataset),
synth (synthetic beat dataset), search (architecture search -> genotype),
train (genotype -> model), eval (model -> classification report), and
export-genotype (checkpoint -> genotype). Usage errors exit 2 (argparse);
validation and IO failures exit 1 with an "error [category]: ..." line.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CardionasError, ConfigError, IngestionError
from .metrics import (ConfusionMatrix, render_report, report_from_matrix,
                      report_to_json_text)
from .network import TrainConfig, build_network, load_model, predict, save_model, train_final
from .pipeline import (DB_PROFILES, SPLIT_NAMES, SPLIT_SEARCH_VAL, SPLIT_TEST,
                       HeartbeatDataset, dataset_stats, preprocess_records)
from .search_space import Genotype, discretize
from .supernet import SearchConfig, SearchRun, read_checkpoint_alphas
from .synthetic import make_synthetic_dataset


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_dataset(path: str) -> HeartbeatDataset:
    return HeartbeatDataset.from_bytes(Path(path).read_bytes())


def cmd_preprocess(args: argparse.Namespace) -> int:
    profile = DB_PROFILES[args.db]
    leads = tuple(s.strip() for s in args.leads.split(","))
    if not all(leads):
        raise ConfigError(f"bad --leads value {args.leads!r}")
    signals_dir = Path(args.signals)
    if not signals_dir.is_dir():
        raise IngestionError(f"signals directory not found: {signals_dir}")
    annotations_dir = Path(args.annotations)
    pairs = []
    for sig in sorted(signals_dir.glob("*.csv")):
        ann = annotations_dir / sig.name
        if not ann.is_file():
            raise IngestionError(f"missing annotation file: {ann}")
        pairs.append((sig, ann))
    if not pairs:
        raise IngestionError(f"no .csv records in {signals_dir}")
    dataset, report = preprocess_records(pairs, profile, leads=leads, seed=args.seed)
    Path(args.out).write_bytes(dataset.to_bytes())
    print(f"records: {report.records}  beats: {report.beats}  "
          f"dropped: {report.dropped}  skipped: {report.skipped}")
    print(dataset_stats(dataset))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    ds = make_synthetic_dataset(seed=args.seed, per_class=args.per_class,
                                length=args.length, leads=args.leads,
                                noise=args.noise)
    Path(args.out).write_bytes(ds.to_bytes())
    print(dataset_stats(ds))
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    config = SearchConfig(epochs=args.epochs, batch_size=args.batch,
                          init_channels=args.channels, cells=args.cells,
                          seed=args.seed)
    dataset = _load_dataset(args.dataset)
    run = SearchRun(config, dataset)
    for _ in range(config.epochs):
        run.run_epoch()
        _log(f"search epoch {run.state.epoch}/{config.epochs}: "
             f"train loss {run.state.train_loss[-1]:.4f}, "
             f"val loss {run.state.val_loss[-1]:.4f}")
    genotype = run.genotype()
    Path(args.out_genotype).write_text(genotype.to_json_text())
    if args.checkpoint:
        Path(args.checkpoint).write_bytes(run.checkpoint())
    print(genotype.to_json_text(), end="")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    genotype = Genotype.from_json_text(Path(args.genotype).read_text())
    config = TrainConfig(layers=args.layers, epochs=args.epochs,
                         batch_size=args.batch, init_channels=args.channels,
                         seed=args.seed)
    dataset = _load_dataset(args.dataset)
    net = build_network(genotype, config, leads=dataset.leads)
    result = train_final(net, dataset, log=_log)
    Path(args.out_model).write_bytes(save_model(net))
    print(f"final train loss: {result.train_loss[-1]:.4f}  "
          f"val accuracy: {result.val_accuracy[-1]:.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.dataset)
    net = load_model(Path(args.model).read_bytes())
    split = SPLIT_TEST if args.split == "test" else SPLIT_SEARCH_VAL
    ids = dataset.indices_for(split)
    if len(ids) == 0:
        raise ConfigError(f"dataset has no beats in split {SPLIT_NAMES[split]!r}")
    preds = predict(net, dataset.windows[ids])
    cm = ConfusionMatrix()
    cm.update(dataset.labels[ids].astype(np.int64), preds)
    report = report_from_matrix(cm.counts)
    text = render_report(report)
    print(text, end="")
    if args.report:
        Path(args.report).write_text(text)
        Path(args.report + ".json").write_text(report_to_json_text(report))
    return 0


def cmd_export_genotype(args: argparse.Namespace) -> int:
    alpha_normal, alpha_reduce = read_checkpoint_alphas(Path(args.checkpoint).read_bytes())
    genotype = discretize(alpha_normal, alpha_reduce)
    Path(args.out).write_text(genotype.to_json_text())
    print(genotype.to_json_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cardionas",
        description="Differentiable architecture search for ECG heartbeat classification.")
    parser.add_argument("--version", action="version", version=f"cardionas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="CSV records -> beat dataset file")
    p.add_argument("--db", required=True, choices=sorted(DB_PROFILES))
    p.add_argument("--signals", required=True, help="directory of signal CSVs")
    p.add_argument("--annotations", required=True, help="directory of annotation CSVs")
    p.add_argument("--leads", required=True, help="comma-separated lead names to keep")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="generate a synthetic beat dataset file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--length", type=int, default=300)
    p.add_argument("--leads", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("search", help="architecture search on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--cells", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-genotype", required=True)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", help="train a genotype into a model file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--genotype", required=True)
    p.add_argument("--layers", type=int, default=15)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model file on a dataset split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=["test", "search_val"], default="test")
    p.add_argument("--report", default=None, help="also write the report here (+ .json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-genotype", help="discretize a checkpoint's scores")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_genotype)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CardionasError as e:
        print(f"error [{e.category}]: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error [io]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
