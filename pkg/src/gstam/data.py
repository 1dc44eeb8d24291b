"""Graph datasets: containers, TU/JSON ingestion, splitting and class batching."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, FormatError, IngestionError

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Graph:
    """A dense undirected graph with node features and a class label."""

    adjacency: np.ndarray
    features: np.ndarray
    label: int

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=np.float64)
        feats = np.array(self.features, dtype=np.float64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ContractError(f"adjacency must be square, got {adj.shape}")
        if feats.ndim != 2 or feats.shape[0] != adj.shape[0]:
            raise ContractError(f"features {feats.shape} do not match {adj.shape[0]} nodes")
        if not np.array_equal(adj, adj.T) or np.any(np.diag(adj) != 0):
            raise ContractError("adjacency must be symmetric with zero diagonal")
        adj.setflags(write=False)
        feats.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "label", int(self.label))

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.adjacency, k=1)))


@dataclass
class GraphDataset:
    graphs: list[Graph]
    num_classes: int
    feature_dim: int
    split: dict[str, np.ndarray] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        for i, g in enumerate(self.graphs):
            if g.features.shape[1] != self.feature_dim:
                raise ContractError(f"graph {i} has feature width {g.features.shape[1]}, expected {self.feature_dim}")
            if not 0 <= g.label < self.num_classes:
                raise ContractError(f"graph {i} has label {g.label} outside 0..{self.num_classes - 1}")
        self.split = {k: np.asarray(v, dtype=np.int64) for k, v in self.split.items()}
        seen: set[int] = set()
        for key, idx in self.split.items():
            if key not in SPLITS:
                raise ContractError(f"unknown split {key!r}")
            if idx.size and (idx.min() < 0 or idx.max() >= len(self.graphs)):
                raise ContractError(f"split {key!r} has indices outside 0..{len(self.graphs) - 1}")
            overlap = seen.intersection(idx.tolist())
            if overlap or len(set(idx.tolist())) != idx.size:
                raise ContractError(f"split {key!r} overlaps another split or repeats indices")
            seen.update(idx.tolist())

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def indices(self, split: str | None = "train") -> np.ndarray:
        if split is None:
            return np.arange(len(self.graphs))
        if split not in self.split:
            raise ContractError(f"dataset has no {split!r} split")
        return self.split[split]

    def class_indices(self, class_id: int, split: str | None = "train") -> np.ndarray:
        if not 0 <= class_id < self.num_classes:
            raise ContractError(f"unknown class {class_id}; dataset has {self.num_classes}")
        idx = self.indices(split)
        return idx[self.labels[idx] == class_id]

    def subset(self, indices: Sequence[int]) -> list[Graph]:
        return [self.graphs[i] for i in indices]

    def class_histogram(self, split: str | None = None) -> np.ndarray:
        return np.bincount(self.labels[self.indices(split)], minlength=self.num_classes)


@dataclass(frozen=True)
class ClassBatch:
    class_id: int
    graph_indices: np.ndarray


# -- TU format ---------------------------------------------------------------


def _read_ints(path: Path, columns: int | None = None) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values = [int(float(tok)) for tok in line.replace(",", " ").split()]
            except ValueError:
                raise FormatError(f"{path.name}:{lineno}: not an integer row: {line!r}") from None
            if columns is not None and len(values) != columns:
                raise FormatError(f"{path.name}:{lineno}: expected {columns} values, got {len(values)}")
            rows.append(values if columns != 1 else values[0])
    return np.array(rows, dtype=np.int64)


def _read_floats(path: Path) -> np.ndarray:
    try:
        return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2))
    except ValueError as exc:
        raise FormatError(f"{path.name}: {exc}") from None


def load_tu_dataset(path: str | os.PathLike, name: str) -> GraphDataset:
    """Load a dataset in the TU benchmark text format (1-indexed files).

    Node labels become one-hot features; node attributes, if present, are
    appended after the one-hot block. Without node labels every node gets
    the constant feature 1. Graph labels are remapped to ``0..C-1``.
    """
    root = Path(path)
    if not root.is_dir():
        raise IngestionError(f"dataset directory not found: {root}")

    def required(suffix):
        p = root / f"{name}_{suffix}.txt"
        if not p.exists():
            raise IngestionError(f"missing required file: {p}")
        return p

    edges_path = required("A")
    indicator = _read_ints(required("graph_indicator"), columns=1)
    raw_labels = _read_ints(required("graph_labels"), columns=1)
    edges = _read_ints(edges_path, columns=2)

    num_nodes = indicator.size
    num_graphs = raw_labels.size
    if indicator.size and (indicator.min() < 1 or indicator.max() > num_graphs):
        raise FormatError(f"{name}_graph_indicator.txt references graphs outside 1..{num_graphs}")

    node_labels_path = root / f"{name}_node_labels.txt"
    attrs_path = root / f"{name}_node_attributes.txt"
    if (root / f"{name}_edge_labels.txt").exists():
        logger.warning("%s: edge labels are not supported and will be ignored", name)

    blocks = []
    if node_labels_path.exists():
        node_labels = _read_ints(node_labels_path, columns=1)
        if node_labels.size != num_nodes:
            raise FormatError(f"{node_labels_path.name} has {node_labels.size} rows for {num_nodes} nodes")
        values, codes = np.unique(node_labels, return_inverse=True)
        blocks.append(np.eye(values.size)[codes])
    if attrs_path.exists():
        attrs = _read_floats(attrs_path)
        if attrs.shape[0] != num_nodes:
            raise FormatError(f"{attrs_path.name} has {attrs.shape[0]} rows for {num_nodes} nodes")
        blocks.append(attrs)
    features = np.hstack(blocks) if blocks else np.ones((num_nodes, 1))

    graph_of_node = indicator - 1
    order = np.argsort(graph_of_node, kind="stable")
    node_ids = np.split(order, np.cumsum(np.bincount(graph_of_node, minlength=num_graphs))[:-1])
    local = np.empty(num_nodes, dtype=np.int64)
    for ids in node_ids:
        local[ids] = np.arange(ids.size)
    adjacency = [np.zeros((ids.size, ids.size)) for ids in node_ids]
    for lineno, (i, j) in enumerate(edges, start=1):
        if not (1 <= i <= num_nodes and 1 <= j <= num_nodes):
            raise FormatError(f"{edges_path.name}:{lineno}: edge ({i}, {j}) references a node outside 1..{num_nodes}")
        gi, gj = graph_of_node[i - 1], graph_of_node[j - 1]
        if gi != gj:
            raise FormatError(f"{edges_path.name}:{lineno}: edge ({i}, {j}) joins graphs {gi + 1} and {gj + 1}")
        if i == j:
            continue
        a = adjacency[gi]
        a[local[i - 1], local[j - 1]] = a[local[j - 1], local[i - 1]] = 1.0

    classes, labels = np.unique(raw_labels, return_inverse=True)
    graphs = [Graph(adjacency[g], features[node_ids[g]], labels[g]) for g in range(num_graphs)]
    return GraphDataset(graphs, num_classes=classes.size, feature_dim=features.shape[1], name=name)


# -- JSON format -------------------------------------------------------------


def _json_error(where: str, message: str) -> IngestionError:
    return IngestionError(f"{where}: {message}")


def graph_from_json(entry, where: str, feature_dim: int | None = None) -> Graph:
    if not isinstance(entry, dict):
        raise _json_error(where, "expected an object")
    for key in ("label", "features"):
        if key not in entry:
            raise _json_error(where, f"missing key {key!r}")
    feats = entry["features"]
    if not isinstance(feats, list) or not all(isinstance(r, list) for r in feats):
        raise _json_error(f"{where}.features", "expected a list of rows")
    widths = {len(r) for r in feats}
    if len(widths) > 1:
        raise _json_error(f"{where}.features", f"rows have inconsistent widths {sorted(widths)}")
    try:
        x = np.array(feats, dtype=np.float64).reshape(len(feats), -1 if feats else 0)
    except (TypeError, ValueError):
        raise _json_error(f"{where}.features", "non-numeric entry") from None
    if feature_dim is not None and x.shape[1] != feature_dim:
        raise _json_error(f"{where}.features", f"width {x.shape[1]} differs from dataset width {feature_dim}")
    m = x.shape[0]
    if "adjacency" in entry:
        a = np.array(entry["adjacency"], dtype=np.float64)
        if a.shape != (m, m):
            raise _json_error(f"{where}.adjacency", f"shape {a.shape} does not match {m} nodes")
        a = np.maximum(a, a.T)
        np.fill_diagonal(a, 0.0)
    else:
        a = np.zeros((m, m))
        for k, edge in enumerate(entry.get("edges", [])):
            if not (isinstance(edge, list) and len(edge) == 2):
                raise _json_error(f"{where}.edges[{k}]", "expected a pair [i, j]")
            i, j = edge
            if not (isinstance(i, int) and isinstance(j, int) and 0 <= i < m and 0 <= j < m):
                raise _json_error(f"{where}.edges[{k}]", f"endpoint outside 0..{m - 1}")
            if i != j:
                a[i, j] = a[j, i] = 1.0
    label = entry["label"]
    if not isinstance(label, int):
        raise _json_error(f"{where}.label", "expected an integer")
    return Graph(a, x, label)


def load_json_dataset(path: str | os.PathLike, seed: int = 0) -> GraphDataset:
    """Read the generic JSON dataset format (0-indexed).

    Without a ``splits`` object the dataset is split 80/10/10 under ``seed``.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"dataset file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise _json_error("$", "expected an object")
    if not isinstance(doc.get("graphs"), list):
        raise _json_error("$.graphs", "expected a list")
    if not isinstance(doc.get("num_classes"), int):
        raise _json_error("$.num_classes", "expected an integer")
    graphs: list[Graph] = []
    feature_dim = None
    for i, entry in enumerate(doc["graphs"]):
        g = graph_from_json(entry, f"$.graphs[{i}]", feature_dim)
        feature_dim = g.features.shape[1]
        if not 0 <= g.label < doc["num_classes"]:
            raise _json_error(f"$.graphs[{i}].label", f"{g.label} outside 0..{doc['num_classes'] - 1}")
        graphs.append(g)
    splits = doc.get("splits")
    if splits is not None and not isinstance(splits, dict):
        raise _json_error("$.splits", "expected an object")
    dataset = GraphDataset(graphs, doc["num_classes"], feature_dim or 0, splits or {}, name=path.stem)
    if splits is None:
        dataset = random_split(dataset, seed=seed)
    return dataset


def graph_to_json(g: Graph) -> dict:
    rows, cols = np.nonzero(np.triu(g.adjacency, k=1))
    return {
        "label": g.label,
        "features": g.features.tolist(),
        "edges": [[int(i), int(j)] for i, j in zip(rows, cols)],
    }


def dataset_to_json(dataset: GraphDataset) -> dict:
    doc = {"num_classes": dataset.num_classes, "graphs": [graph_to_json(g) for g in dataset.graphs]}
    if dataset.split:
        doc["splits"] = {k: v.tolist() for k, v in dataset.split.items()}
    return doc


def save_json_dataset(dataset: GraphDataset, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(dataset_to_json(dataset)))


# -- splitting and sampling --------------------------------------------------


def random_split(
    dataset: GraphDataset, fractions: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0
) -> GraphDataset:
    """Shuffle under ``seed`` and split train/val/test.

    Validation and test sizes are floored; the remainder goes to train.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError(f"fractions must be three positive numbers, got {tuple(fractions)}")
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(dataset)
    perm = np.random.default_rng(seed).permutation(n)
    n_val = math.floor(n * fractions[1] + 1e-9)
    n_test = math.floor(n * fractions[2] + 1e-9)
    n_train = n - n_val - n_test
    split = {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train : n_train + n_val]),
        "test": np.sort(perm[n_train + n_val :]),
    }
    return GraphDataset(dataset.graphs, dataset.num_classes, dataset.feature_dim, split, dataset.name)


def sample_class_batch(
    dataset: GraphDataset, class_id: int, batch_size: int, rng: np.random.Generator, split: str = "train"
) -> ClassBatch:
    """Uniformly sample up to ``batch_size`` graphs of one class without replacement."""
    pool = dataset.class_indices(class_id, split)
    if pool.size == 0:
        raise ContractError(f"class {class_id} has no graphs in the {split!r} split")
    if pool.size <= batch_size:
        return ClassBatch(class_id, pool.copy())
    return ClassBatch(class_id, np.sort(rng.choice(pool, size=batch_size, replace=False)))


def mean_node_count(dataset: GraphDataset, split: str | None = "train") -> int:
    """Mean node count of a split, rounded half-up, at least 2."""
    idx = dataset.indices(split)
    if idx.size == 0:
        raise ContractError(f"split {split!r} is empty")
    avg = float(np.mean([dataset.graphs[i].node_count for i in idx]))
    return max(2, math.floor(avg + 0.5))
