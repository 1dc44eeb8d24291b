"""Train fresh GNNs on a condensed set and score them on the real test split."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import rankdata

from . import autodiff as ad
from .data import Graph, GraphDataset
from .errors import ConfigError, ContractError, MetricError, TrainingError
from .models import GnnConfig, GraphBatch, ModelParams, forward, init_params, params_as_tensors, predict
from .seeds import derive_seed

logger = logging.getLogger(__name__)

METRICS = ("accuracy", "roc_auc")


@dataclass
class EvalConfig:
    epochs: int = 500
    lr: float = 0.001
    eval_models_per_set: int = 10
    distill_repeats: int = 5
    metric: str = "accuracy"
    architectures: list[GnnConfig] = field(default_factory=lambda: [GnnConfig()])
    batch_size: int | None = None
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.eval_models_per_set < 1 or self.distill_repeats < 1:
            raise ConfigError("eval_models_per_set and distill_repeats must be >= 1")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")


@dataclass
class CondensedSet:
    """Graphs to train on. ``source_indices`` is set when they are real training graphs."""

    graphs: list[Graph]
    method: str = "gstam"
    source_indices: np.ndarray | None = None


@dataclass
class EvalResult:
    mean: float
    std: float
    scores: list[float]
    metric: str
    architecture: str

    def __str__(self) -> str:
        scale = 100.0 if self.metric == "accuracy" else 1.0
        return f"{self.architecture} {self.metric}: {scale * self.mean:.2f} ± {scale * self.std:.2f} ({len(self.scores)} runs)"


def train_classifier(
    graphs: Sequence[Graph],
    config: GnnConfig,
    seed: int,
    epochs: int = 500,
    lr: float = 0.001,
    batch_size: int | None = None,
) -> ModelParams:
    """Fit a freshly initialised GNN with Adam on softmax cross-entropy."""
    if not graphs:
        raise ContractError("training set is empty")
    rng = np.random.default_rng(seed)
    params = params_as_tensors(init_params(config, graphs[0].features.shape[1], rng), requires_grad=True)
    labels = np.array([g.label for g in graphs])
    optimizer = ad.Adam(list(params.values()), lr=lr)
    full_batch = batch_size is None or batch_size >= len(graphs)
    whole = GraphBatch.from_graphs(graphs) if full_batch else None

    for epoch in range(epochs):
        if full_batch:
            chunks = [(whole, labels)]
        else:
            order = rng.permutation(len(graphs))
            chunks = [
                (GraphBatch.from_graphs([graphs[i] for i in idx]), labels[idx])
                for idx in np.array_split(order, int(np.ceil(len(graphs) / batch_size)))
            ]
        for batch, y in chunks:
            optimizer.zero_grad()
            loss = ad.cross_entropy(forward(params, config, batch).head_output, y)
            if not np.isfinite(loss.item()):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
    return {k: t.data for k, t in params.items()}


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counted as 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC-AUC needs both positive and negative samples")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def score(params: ModelParams, config: GnnConfig, graphs: Sequence[Graph], metric: str = "accuracy") -> float:
    if not graphs:
        raise ContractError("test split is empty")
    logits = predict(params, config, list(graphs))
    labels = np.array([g.label for g in graphs])
    if metric == "accuracy":
        return float(np.mean(logits.argmax(axis=1) == labels))
    if metric == "roc_auc":
        if logits.shape[1] != 2:
            raise MetricError(f"ROC-AUC needs 2 classes, got {logits.shape[1]}")
        return roc_auc(ad.softmax(logits)[:, 1], labels)
    raise MetricError(f"unknown metric {metric!r}")


def _check_disjoint(dataset: GraphDataset, condensed: CondensedSet) -> None:
    if condensed.source_indices is None:
        return
    held_out = set()
    for key in ("val", "test"):
        if key in dataset.split:
            held_out.update(dataset.split[key].tolist())
    leaked = held_out.intersection(np.asarray(condensed.source_indices).tolist())
    if leaked:
        raise ContractError(f"condensed set contains held-out graphs {sorted(leaked)[:5]}")


def _one_run(graphs, arch, seed, cfg, test_graphs):
    params = train_classifier(graphs, arch, seed, cfg.epochs, cfg.lr, cfg.batch_size)
    return score(params, arch, test_graphs, cfg.metric)


def evaluate_condensed(
    dataset: GraphDataset,
    condensed_sets: Sequence[CondensedSet],
    eval_config: EvalConfig,
    arch: GnnConfig | None = None,
) -> EvalResult:
    """Train ``eval_models_per_set`` models per condensed set and score each on the test split."""
    arch = arch or eval_config.architectures[0]
    if len(condensed_sets) != eval_config.distill_repeats:
        raise ContractError(f"expected {eval_config.distill_repeats} condensed sets, got {len(condensed_sets)}")
    for cs in condensed_sets:
        _check_disjoint(dataset, cs)
    test_graphs = dataset.subset(dataset.indices("test"))
    jobs = [
        (cs.graphs, derive_seed(eval_config.seed, "eval", r, k))
        for r, cs in enumerate(condensed_sets)
        for k in range(eval_config.eval_models_per_set)
    ]
    if eval_config.n_jobs == 1:
        scores = [_one_run(g, arch, s, eval_config, test_graphs) for g, s in jobs]
    else:
        scores = Parallel(n_jobs=eval_config.n_jobs)(
            delayed(_one_run)(g, arch, s, eval_config, test_graphs) for g, s in jobs
        )
    result = EvalResult(float(np.mean(scores)), float(np.std(scores)), [float(s) for s in scores], eval_config.metric, arch.name)
    logger.info("%s", result)
    return result


def cross_architecture(
    dataset: GraphDataset,
    condensed_sets: Sequence[CondensedSet],
    train_arch: GnnConfig,
    test_archs: Sequence[GnnConfig],
    eval_config: EvalConfig,
) -> dict[str, EvalResult]:
    """Evaluate sets distilled under ``train_arch`` with each of ``test_archs``."""
    results = {}
    for arch in test_archs:
        arch = GnnConfig(arch.arch, arch.num_conv_layers, arch.hidden_dim, dataset.num_classes)
        res = evaluate_condensed(dataset, condensed_sets, eval_config, arch)
        results[arch.name] = res
        logger.info("distilled on %s, tested on %s: %s", train_arch.name, arch.name, res)
    return results


CSV_FIELDS = ("dataset", "method", "graphs_per_class", "ratio", "arch_train", "arch_test", "metric", "mean", "std", "runs")


def condensation_ratio(num_condensed: int, dataset: GraphDataset) -> float:
    return num_condensed / max(1, len(dataset.indices("train")))


def append_results_csv(path: str | os.PathLike, rows: Sequence[dict]) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if new:
            writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in CSV_FIELDS})
