"""``gaga`` command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(missing/malformed files, incompatible artifacts), 3 numeric failure.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from gaga import autodiff as ad
from gaga._io import atomic_write_text
from gaga.attention import attention_report
from gaga.config import ConfigError, RunConfig
from gaga.graph import (
    GraphError,
    SplitAssignment,
    SyntheticSpec,
    generate_synthetic,
    graph_stats,
    load_graph,
    make_splits,
    save_graph,
)
from gaga.groupagg import SequenceDataset, preprocess_all
from gaga.metrics import MetricError, Metrics
from gaga.model import GagaModel
from gaga.train import TrainingDiverged, TrainingError, check_compatible, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
METRIC_NAMES = ("auc", "ap", "f1_macro", "f1_fraud", "f1_benign")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_seeds(text: str) -> list[int]:
    """``"0..4"`` (inclusive range) or ``"1,5,9"``."""
    try:
        if ".." in text:
            lo, hi = (int(s) for s in text.split("..", 1))
            seeds = list(range(lo, hi + 1))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --seeds value {text!r}") from None
    if not seeds:
        raise UsageError("--seeds is empty")
    if len(set(seeds)) != len(seeds):
        raise UsageError("--seeds lists a seed twice")
    return seeds


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.set:
        cfg = cfg.with_overrides(args.set)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _load_artifacts(seq_file, splits_file):
    dataset = SequenceDataset.load(seq_file)
    splits = SplitAssignment.load(splits_file, num_nodes=dataset.num_nodes)
    return dataset, splits


def _model_for(cfg: RunConfig, dataset: SequenceDataset):
    mc = cfg.model_config(dataset.feature_dim, dataset.num_relations)
    if cfg.groupagg_config() != dataset.config:
        raise DataError(
            f"config n_hops={cfg.n_hops}, alpha={cfg.alpha} disagrees with the sequence file "
            f"(n_hops={dataset.config.num_hops}, alpha={dataset.config.alpha})"
        )
    try:
        check_compatible(mc, dataset)
    except TrainingError as exc:
        raise DataError(str(exc)) from None
    return mc


def _load_model(checkpoint, cfg: RunConfig, dataset: SequenceDataset) -> GagaModel:
    mc = _model_for(cfg, dataset)
    digest, values = ad.load_parameters(checkpoint)
    if digest != mc.digest():
        raise DataError(f"{checkpoint}: config hash mismatch between checkpoint and config/dataset")
    model = GagaModel(mc)
    try:
        model.load_state(values)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{checkpoint}: {exc}") from None
    return model


def _config_beside(args) -> RunConfig:
    if args.config:
        return _run_config(args)
    echo = Path(args.checkpoint).with_name("config.txt")
    cfg = RunConfig.load(echo)
    return cfg.with_overrides(args.set) if args.set else cfg


# ------------------------------------------------------------------ commands


def cmd_stats(args) -> int:
    stats = graph_stats(load_graph(args.dataset))
    print(stats.format_table())
    return EXIT_OK


def cmd_synth(args) -> int:
    path = Path(args.spec)
    if not path.is_file():
        raise DataError(f"{path}: missing spec file")
    spec = SyntheticSpec.from_text(path.read_text(encoding="utf-8"))
    if args.seed is not None:
        spec.seed = args.seed
    graph = generate_synthetic(spec)
    save_graph(graph, args.out)
    print(graph_stats(graph).format_table())
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = _run_config(args)
    graph = load_graph(args.dataset)
    splits = make_splits(graph, cfg.train_frac, cfg.val_frac, cfg.label_frac, cfg.seed)
    splits.save(args.out)
    counts = {role: len(splits.indices(role)) for role in ("train", "val", "test")}
    print(f"train={counts['train']} val={counts['val']} test={counts['test']} "
          f"observed={int(splits.observed.sum())} seed={cfg.seed}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _run_config(args)
    graph = load_graph(args.dataset)
    splits = SplitAssignment.load(args.splits, num_nodes=graph.num_nodes)
    start = time.perf_counter()
    dataset = preprocess_all(graph, cfg.groupagg_config(), splits.observed,
                             workers=cfg.workers, variant=cfg.variant)
    elapsed = time.perf_counter() - start
    dataset.save(args.out)
    print(f"wrote {dataset.num_nodes} sequences of {dataset.seq_len}x{dataset.feature_dim} to {args.out}")
    rate = dataset.num_nodes / elapsed if elapsed > 0 else float("inf")
    print(f"preprocessing: {elapsed:.3f} s, {rate:.0f} sequences/s", file=sys.stderr)
    return EXIT_OK


def _train_one(cfg: RunConfig, dataset, splits, out: Path, seed: int, verbose: bool) -> Metrics:
    mc = _model_for(cfg, dataset)
    log = (lambda line: print(line, file=sys.stderr)) if verbose else None
    model, history = train(dataset, splits, mc, cfg.train_config(seed), log=log)
    metrics = evaluate(model, dataset, splits, "test", threshold=cfg.threshold)
    out.mkdir(parents=True, exist_ok=True)
    cfg.replace(seed=seed).save(out / "config.txt")
    ad.save_parameters(out / "model.ckpt", model.parameters(), mc.digest())
    atomic_write_text(out / "history.csv", history.to_csv())
    atomic_write_text(out / "metrics.txt", metrics.to_text())
    atomic_write_text(out / "metrics.csv", metrics.csv_header() + "\n" + metrics.csv_row() + "\n")
    return metrics


def format_mean_std(values) -> str:
    v = np.asarray(values, dtype=np.float64)
    return f"{v.mean():.4f}±{v.std():.4f}"


def cmd_train(args) -> int:
    cfg = _run_config(args)
    dataset, splits = _load_artifacts(args.sequences, args.splits)
    out = Path(args.out)
    if args.seeds is None:
        metrics = _train_one(cfg, dataset, splits, out, cfg.seed, args.verbose)
        print(metrics.to_text(), end="")
        return EXIT_OK
    seeds = parse_seeds(args.seeds)
    results = []
    for seed in seeds:
        m = _train_one(cfg, dataset, splits, out / f"seed_{seed}", seed, args.verbose)
        results.append(m)
        print(f"seed {seed}: " + " ".join(f"{k}={getattr(m, k):.4f}" for k in METRIC_NAMES))
    lines = [f"seeds={','.join(map(str, seeds))}"]
    lines += [f"{k.upper()} mean±std\t{format_mean_std([getattr(m, k) for m in results])}"
              for k in METRIC_NAMES]
    summary = "\n".join(lines) + "\n"
    cfg.save(out / "config.txt")
    atomic_write_text(out / "summary.txt", summary)
    print(summary, end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config_beside(args)
    dataset, splits = _load_artifacts(args.sequences, args.splits)
    model = _load_model(args.checkpoint, cfg, dataset)
    try:
        metrics = evaluate(model, dataset, splits, args.role, threshold=cfg.threshold)
    except TrainingError as exc:
        raise DataError(str(exc)) from None
    if args.out:
        atomic_write_text(args.out, metrics.to_text())
    print(metrics.to_text(), end="")
    return EXIT_OK


def cmd_attn(args) -> int:
    cfg = _config_beside(args)
    dataset, splits = _load_artifacts(args.sequences, args.splits)
    model = _load_model(args.checkpoint, cfg, dataset)
    nodes = splits.indices(args.role)
    nodes = nodes[dataset.labels[nodes] >= 0]
    if len(nodes) == 0:
        raise DataError(f"role {args.role!r} has no labeled nodes")
    report = attention_report(model, dataset.sequences[nodes], dataset.labels[nodes])
    text = report.to_csv()
    atomic_write_text(args.out, text)
    print(text, end="")
    return EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gaga", description="Group-aggregation Transformer for graph fraud detection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def configurable(p, seed=True):
        p.add_argument("--config", help="key=value run configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        if seed:
            p.add_argument("--seed", type=int, help="override the seed key")

    p = sub.add_parser("stats", help="print dataset statistics")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="write a stratified splits.tsv")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    configurable(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("preprocess", help="build the group-aggregated sequence file")
    p.add_argument("dataset")
    p.add_argument("--splits", required=True)
    p.add_argument("--out", required=True)
    configurable(p, seed=False)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train and write checkpoint, history and metrics")
    p.add_argument("sequences")
    p.add_argument("splits")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", help="multi-seed run, e.g. 0..9 or 1,2,3")
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch to stderr")
    configurable(p)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "evaluate a checkpoint"),
                                 ("attn", cmd_attn, "export attention statistics as CSV")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("checkpoint")
        p.add_argument("sequences")
        p.add_argument("splits")
        p.add_argument("--role", default="test", choices=("train", "val", "test"))
        p.add_argument("--out", required=(name == "attn"))
        configurable(p, seed=False)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"gaga: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, ad.NonFiniteError) as exc:
        print(f"gaga: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, GraphError, TrainingError, MetricError, ValueError, OSError) as exc:
        print(f"gaga: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
