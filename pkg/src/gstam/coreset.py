"""Selection baselines: pick real training graphs instead of synthesizing them.

Herding and K-Center work on a per-graph embedding table and use no
randomness; ties go to the lowest row index.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

import numpy as np

from .data import GraphDataset, dataset_to_json
from .errors import ConfigError, ContractError, ExportError, NumericError
from .evaluation import train_classifier
from .models import GnnConfig, GraphBatch, forward

logger = logging.getLogger(__name__)

METHODS = ("random", "herding", "kcenter")


def select_random(dataset: GraphDataset, per_class: int, seed: int, split: str = "train") -> np.ndarray:
    """Uniform draw without replacement per class; whole class when it is too small."""
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(dataset.num_classes):
        pool = dataset.class_indices(c, split)
        if pool.size <= per_class:
            chosen.append(pool)
        else:
            chosen.append(np.sort(rng.choice(pool, size=per_class, replace=False)))
    return np.concatenate(chosen).astype(np.int64)


def _check_table(embeddings: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if emb.ndim != 2 or labels.shape != (emb.shape[0],):
        raise ContractError(f"embeddings {emb.shape} and labels {labels.shape} do not line up")
    if not np.all(np.isfinite(emb)):
        raise NumericError("embeddings contain NaN or Inf")
    return emb, labels


def _herding_class(x: np.ndarray, k: int) -> list[int]:
    mu = x.mean(axis=0)
    selected: list[int] = []
    running = np.zeros_like(mu)
    available = np.ones(len(x), dtype=bool)
    for step in range(1, k + 1):
        gaps = np.linalg.norm(mu - (running + x) / step, axis=1)
        gaps[~available] = np.inf
        best = int(np.argmin(gaps))
        selected.append(best)
        available[best] = False
        running += x[best]
    return selected


def select_herding(embeddings, labels, per_class: int) -> np.ndarray:
    """Greedy herding: each step adds the row that brings the selection mean closest to the class mean."""
    emb, labels = _check_table(embeddings, labels)
    out = []
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        out.extend(rows[_herding_class(emb[rows], min(per_class, rows.size))])
    return np.array(out, dtype=np.int64)


def _kcenter_class(x: np.ndarray, k: int) -> list[int]:
    first = int(np.argmin(np.linalg.norm(x - x.mean(axis=0), axis=1)))
    selected = [first]
    nearest = np.linalg.norm(x - x[first], axis=1)
    nearest[first] = -np.inf
    for _ in range(k - 1):
        best = int(np.argmax(nearest))
        selected.append(best)
        nearest = np.minimum(nearest, np.linalg.norm(x - x[best], axis=1))
        nearest[selected] = -np.inf
    return selected


def select_kcenter(embeddings, labels, per_class: int) -> np.ndarray:
    """Farthest-first traversal per class, starting at the row nearest the class mean."""
    emb, labels = _check_table(embeddings, labels)
    out = []
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        out.extend(rows[_kcenter_class(emb[rows], min(per_class, rows.size))])
    return np.array(out, dtype=np.int64)


def compute_embeddings(
    dataset: GraphDataset,
    indices: np.ndarray,
    arch: GnnConfig | None = None,
    seed: int = 0,
    epochs: int = 50,
    trained: bool = True,
) -> np.ndarray:
    """One row per graph in ``indices``.

    With ``trained`` the row is the mean of last conv-layer node features of a
    GNN fit for ``epochs`` on the training split; otherwise it is the mean of
    the raw node features.
    """
    graphs = dataset.subset(indices)
    if not trained:
        return np.stack([g.features.mean(axis=0) for g in graphs])
    arch = arch or GnnConfig(output_dim=dataset.num_classes)
    params = train_classifier(dataset.subset(dataset.indices("train")), arch, seed, epochs=epochs)
    batch = GraphBatch.from_graphs(graphs)
    last = forward(params, arch, batch).conv_maps[-1].data
    return last.sum(axis=1) / batch.counts


def select_coreset(
    dataset: GraphDataset,
    method: str,
    per_class: int,
    seed: int = 0,
    arch: GnnConfig | None = None,
    embed_epochs: int = 50,
    trained_embeddings: bool = True,
    embed_seed: int = 0,
) -> np.ndarray:
    """Dataset indices of the selected training graphs, grouped by class.

    ``seed`` only drives the random baseline. The embedding network has its
    own ``embed_seed`` so herding and K-Center give the same subset for any
    run seed.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}")
    if method == "random":
        return select_random(dataset, per_class, seed)
    train = dataset.indices("train")
    emb = compute_embeddings(dataset, train, arch, embed_seed, embed_epochs, trained_embeddings)
    pick = select_herding if method == "herding" else select_kcenter
    return train[pick(emb, dataset.labels[train], per_class)]


def export_subset(dataset: GraphDataset, indices: np.ndarray, path: str | os.PathLike) -> GraphDataset:
    """Write the selected graphs in the JSON dataset schema; all of them form the train split.

    The original dataset indices go under ``source_indices`` so evaluation can
    check them against the held-out splits.
    """
    subset = GraphDataset(
        dataset.subset(indices),
        dataset.num_classes,
        dataset.feature_dim,
        {"train": np.arange(len(indices))},
        dataset.name,
    )
    doc = dataset_to_json(subset)
    doc["source_indices"] = [int(i) for i in indices]
    try:
        Path(path).write_text(json.dumps(doc))
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    logger.info("wrote %d graphs to %s", len(indices), path)
    return subset
