"""Command-line front end: ``distill``, ``baseline`` and ``evaluate``.

Every run writes a ``manifest.json`` with the resolved settings, the derived
seeds and a checksum of the input dataset, which is enough to repeat it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .coreset import METHODS, export_subset, select_coreset
from .data import GraphDataset, load_json_dataset, load_tu_dataset, random_split
from .distill import DistillConfig, distill, export_synthetic, load_synthetic, synthetic_to_dataset
from .errors import ConfigError, GstamError
from .evaluation import (
    METRICS,
    CondensedSet,
    EvalConfig,
    append_results_csv,
    condensation_ratio,
    evaluate_condensed,
)
from .models import GnnConfig
from .seeds import derive_seed

logger = logging.getLogger("gstam")

# mini-batch size used only when training on the whole training split
FULL_DATASET_BATCH = 32


# -- shared plumbing ---------------------------------------------------------


def dataset_checksum(path: Path, fmt: str, name: str) -> str:
    h = hashlib.sha256()
    files = [path] if fmt == "json" else sorted(path.glob(f"{name}_*.txt"))
    for f in files:
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def load_dataset(args) -> tuple[GraphDataset, dict]:
    """Load and split the dataset named by ``--dataset``; returns it with manifest metadata."""
    path = Path(args.dataset)
    if not path.exists():
        raise ConfigError(f"dataset not found: {path}")
    split_seed = args.split_seed if args.split_seed is not None else derive_seed(args.seed, "split")
    if args.format == "tu":
        if not path.is_dir():
            raise ConfigError(f"TU dataset path must be a directory: {path}")
        name = args.name or path.name
        dataset = random_split(load_tu_dataset(path, name), seed=split_seed)
    else:
        name = args.name or path.stem
        dataset = load_json_dataset(path, seed=split_seed)
    meta = {
        "path": str(path),
        "name": name,
        "format": args.format,
        "sha256": dataset_checksum(path, args.format, name),
        "num_graphs": len(dataset),
        "num_classes": dataset.num_classes,
        "feature_dim": dataset.feature_dim,
        "split_seed": split_seed,
        "split_sizes": {k: int(v.size) for k, v in dataset.split.items()},
    }
    return dataset, meta


def write_manifest(out: Path, command: str, argv: list[str], **sections) -> None:
    doc = {"command": command, "argv": argv, "version": __version__, **sections}
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str))


def distill_config_from(args) -> DistillConfig:
    return DistillConfig(
        graphs_per_class=args.gpc,
        iterations=args.iters,
        feature_lr=args.feature_lr,
        adjacency_lr=args.adj_lr,
        lam=args.lam,
        p=args.p,
        real_batch_size=args.batch,
        init_mode=args.init,
        seed=args.seed,
        arch=args.arch,
        hidden_dim=args.hidden,
        threshold=args.threshold,
    )


# -- subcommands -------------------------------------------------------------


def cmd_distill(args, argv) -> int:
    config = distill_config_from(args)
    dataset, meta = load_dataset(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = distill(dataset, config)
    export_synthetic(
        report.synthetic,
        out / "synthetic.json",
        config.threshold,
        dataset.num_classes,
        config,
        metadata={"split_seed": meta["split_seed"], "dataset": meta["name"]},
    )
    with open(out / "loss.csv", "w", newline="") as fh:
        rows = [{"iteration": t + 1, **b.as_row()} for t, b in enumerate(report.loss_history)]
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    write_manifest(
        out,
        "distill",
        argv,
        distill=asdict(config),
        dataset=meta,
        seeds={
            "global": args.seed,
            "split": meta["split_seed"],
            "init": derive_seed(config.seed, "init"),
            "theta": "derive_seed(seed, 'theta', t) for t = 0..iterations-1",
            "real_batch": "derive_seed(seed, 'real-batch', t)",
        },
        wall_time_seconds=report.wall_time,
    )
    last = report.loss_history[-1]
    print(f"distilled {len(report.synthetic)} graphs in {report.wall_time:.1f}s; final loss {last.total:.6f}")
    return 0


def cmd_baseline(args, argv) -> int:
    dataset, meta = load_dataset(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    arch = GnnConfig.from_name(args.arch, hidden_dim=args.hidden, output_dim=dataset.num_classes)
    idx = select_coreset(
        dataset,
        args.method,
        args.gpc,
        seed=derive_seed(args.seed, "coreset"),
        arch=arch,
        embed_epochs=args.embed_epochs,
        trained_embeddings=not args.raw_embeddings,
    )
    path = out / f"{args.method}.json"
    export_subset(dataset, idx, path)
    doc = json.loads(path.read_text())
    doc["config"] = {"method": args.method, "split_seed": meta["split_seed"], "dataset": meta["name"], "arch": arch.name}
    path.write_text(json.dumps(doc))
    write_manifest(
        out,
        "baseline",
        argv,
        baseline={
            "method": args.method,
            "graphs_per_class": args.gpc,
            "embedding": "raw mean features" if args.raw_embeddings else f"{arch.name} trained {args.embed_epochs} epochs",
            "embed_seed": 0,
        },
        dataset=meta,
        seeds={"global": args.seed, "split": meta["split_seed"], "random_coreset": derive_seed(args.seed, "coreset")},
        selected=[int(i) for i in idx],
    )
    print(f"selected {len(idx)} graphs with {args.method} -> {path}")
    return 0


def _read_condensed(path: Path, num_classes: int) -> tuple[CondensedSet, dict]:
    if not path.exists():
        raise ConfigError(f"condensed file not found: {path}")
    doc = json.loads(path.read_text())
    config = doc.get("config", {})
    graphs = doc.get("graphs") or []
    if graphs and "logits" in graphs[0]:
        synthetic, _ = load_synthetic(path)
        ds = synthetic_to_dataset(synthetic, num_classes, config.get("threshold", 0.5))
        return CondensedSet(ds.graphs, "gstam"), config
    subset = load_json_dataset(path)
    source = doc.get("source_indices")
    method = config.get("method", "subset")
    return CondensedSet(subset.graphs, method, None if source is None else np.array(source)), config


def cmd_evaluate(args, argv) -> int:
    if not args.condensed and not args.full:
        raise ConfigError("no condensed files given")
    if args.condensed and args.full:
        raise ConfigError("pass condensed files or --full, not both")
    probe_split = args.split_seed
    configs = []
    if args.condensed:
        for p in args.condensed:
            doc = json.loads(Path(p).read_text()) if Path(p).exists() else {}
            configs.append(doc.get("config", {}))
        seeds = {c.get("split_seed") for c in configs} - {None}
        if len(seeds) > 1:
            raise ConfigError(f"condensed files were built on different splits: {sorted(seeds)}")
        if seeds and probe_split is None:
            args.split_seed = seeds.pop()
    dataset, meta = load_dataset(args)

    if args.full:
        train = dataset.indices("train")
        sets = [CondensedSet(dataset.subset(train), "full", train)]
        batch_size = FULL_DATASET_BATCH
    else:
        sets = [_read_condensed(Path(p), dataset.num_classes)[0] for p in args.condensed]
        batch_size = None
    repeats = args.repeats or len(sets)
    if repeats != len(sets):
        raise ConfigError(f"--repeats {repeats} but {len(sets)} condensed sets given")
    method = sets[0].method
    arch_train = configs[0].get("arch", "-") if configs else "-"
    test_archs = [a for a in args.cross_arch.split(",") if a] if args.cross_arch else [args.arch]

    eval_config = EvalConfig(
        epochs=args.epochs,
        lr=args.eval_lr,
        eval_models_per_set=args.models,
        distill_repeats=repeats,
        metric=args.metric,
        batch_size=batch_size,
        seed=derive_seed(args.seed, "eval"),
        n_jobs=args.jobs,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name in test_archs:
        arch = GnnConfig.from_name(name, hidden_dim=args.hidden, output_dim=dataset.num_classes)
        result = evaluate_condensed(dataset, sets, eval_config, arch)
        n_graphs = len(sets[0].graphs)
        rows.append(
            {
                "dataset": meta["name"],
                "method": method,
                "graphs_per_class": n_graphs / dataset.num_classes,
                "ratio": condensation_ratio(n_graphs, dataset),
                "arch_train": arch_train,
                "arch_test": arch.name,
                "metric": args.metric,
                "mean": result.mean,
                "std": result.std,
                "runs": len(result.scores),
            }
        )
        scale = 100.0 if args.metric == "accuracy" else 1.0
        print(f"{meta['name']} {method} {arch_train} -> {arch.name} {args.metric}: {scale * result.mean:.2f} ± {scale * result.std:.2f}")
    append_results_csv(out / "results.csv", rows)
    eval_echo = asdict(eval_config)
    eval_echo["architectures"] = test_archs
    write_manifest(
        out,
        "evaluate",
        argv,
        evaluation={**eval_echo, "optimizer": "adam"},
        condensed=[str(p) for p in args.condensed],
        dataset=meta,
        seeds={"global": args.seed, "split": meta["split_seed"], "eval": eval_config.seed},
        results=rows,
    )
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values; command-line flags take precedence")
    common.add_argument("--dataset", help="TU dataset directory or JSON dataset file")
    common.add_argument("--format", choices=("tu", "json"), default="tu")
    common.add_argument("--name", help="TU file prefix (defaults to the directory name)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--split-seed", type=int, default=None, help="override the derived split seed")
    common.add_argument("--arch", default="GCN-3C")
    common.add_argument("--hidden", type=int, default=128)
    common.add_argument("--gpc", type=int, default=1, help="graphs per class")
    common.add_argument("--out", default="runs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gstam", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("distill", parents=[common], help="learn a synthetic set")
    d.add_argument("--iters", type=int, default=1000)
    d.add_argument("--feature-lr", type=float, default=0.005)
    d.add_argument("--adj-lr", type=float, default=0.01)
    d.add_argument("--lambda", dest="lam", type=float, default=0.1)
    d.add_argument("--p", type=float, default=2.0)
    d.add_argument("--batch", type=int, default=256, help="real graphs per class per iteration")
    d.add_argument("--init", choices=("random", "kcenter"), default="kcenter")
    d.add_argument("--threshold", type=float, default=0.5)

    b = sub.add_parser("baseline", parents=[common], help="select a coreset")
    b.add_argument("--method", choices=METHODS, required=True)
    b.add_argument("--embed-epochs", type=int, default=50)
    b.add_argument("--raw-embeddings", action="store_true", help="select on mean raw node features")

    e = sub.add_parser("evaluate", parents=[common], help="train fresh models on condensed sets")
    e.add_argument("condensed", nargs="*", help="synthetic.json or coreset JSON files, one per repeat")
    e.add_argument("--full", action="store_true", help="train on the whole training split instead")
    e.add_argument("--epochs", type=int, default=500)
    e.add_argument("--eval-lr", type=float, default=0.001)
    e.add_argument("--repeats", type=int, default=None)
    e.add_argument("--models", type=int, default=10)
    e.add_argument("--metric", choices=METRICS, default="accuracy")
    e.add_argument("--cross-arch", default=None, help="comma-separated test architectures, e.g. gcn2,gin")
    e.add_argument("--jobs", type=int, default=1)
    return parser


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            parser.exit(2, f"error: config file not found: {path}\n")
        overrides = json.loads(path.read_text())
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(overrides) - known
        if unknown:
            parser.exit(2, f"error: unknown keys in {path}: {', '.join(sorted(unknown))}\n")
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
    if not args.dataset:
        parser.exit(2, "error: --dataset is required (flag or config file)\n")
    return args


COMMANDS = {"distill": cmd_distill, "baseline": cmd_baseline, "evaluate": cmd_evaluate}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except (GstamError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
