"""Learn a few synthetic graphs per class by matching attention maps of random GNNs.

Each iteration draws a fresh, untrained GNN, runs a batch of real graphs of
every class and all synthetic graphs of that class through it, and takes one
SGD step on the synthetic node features and adjacency logits to bring their
attention statistics and head outputs closer. The GNN weights are never
trained. Synthetic adjacencies stay soft (sigmoid of the logits) while
learning and are thresholded only on export.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .coreset import select_kcenter
from .data import Graph, GraphDataset, mean_node_count, sample_class_batch
from .errors import ConfigError, ContractError, ExportError, IngestionError, TrainingError
from .models import GnnConfig, GraphBatch, ModelParams, forward, init_params, params_digest
from .seeds import derive_rng
from .stam import LossBreakdown, batch_attention_mean, layer_attention_means, reg_from_means, stam_from_means

logger = logging.getLogger(__name__)

INIT_MODES = ("random", "kcenter")


@dataclass
class SyntheticGraph:
    """Learnable graph. ``upper_logits`` is ``n x n`` with only the strict upper triangle used."""

    features: np.ndarray
    upper_logits: np.ndarray
    label: int

    @property
    def logits(self) -> np.ndarray:
        u = np.triu(self.upper_logits, k=1)
        return u + u.T

    @property
    def node_count(self) -> int:
        return self.features.shape[0]


@dataclass
class DistillConfig:
    graphs_per_class: int = 1
    iterations: int = 1000
    feature_lr: float = 0.005
    adjacency_lr: float = 0.01
    lam: float = 0.1
    p: float = 2.0
    real_batch_size: int = 256
    init_mode: str = "kcenter"
    seed: int = 0
    arch: str = "GCN-3C"
    hidden_dim: int = 128
    threshold: float = 0.5

    def __post_init__(self):
        if self.graphs_per_class < 1:
            raise ConfigError(f"graphs_per_class must be >= 1, got {self.graphs_per_class}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        # zero learning rates are allowed so a run can be checked against its initialization
        if self.feature_lr < 0 or self.adjacency_lr < 0:
            raise ConfigError("learning rates must be >= 0")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.p <= 0:
            raise ConfigError(f"p must be positive, got {self.p}")
        if self.real_batch_size < 1:
            raise ConfigError(f"real_batch_size must be >= 1, got {self.real_batch_size}")
        if self.init_mode not in INIT_MODES:
            raise ConfigError(f"unknown init mode {self.init_mode!r}; expected one of {INIT_MODES}")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")
        GnnConfig.from_name(self.arch)

    def gnn(self, num_classes: int) -> GnnConfig:
        return GnnConfig.from_name(self.arch, hidden_dim=self.hidden_dim, output_dim=num_classes)


@dataclass
class DistillReport:
    loss_history: list[LossBreakdown]
    synthetic: list[SyntheticGraph]
    wall_time: float
    config: DistillConfig
    theta_digests: list[tuple[str, str]] = field(default_factory=list)

    def smoothed_loss(self, window: int = 100) -> np.ndarray:
        """Trailing moving average of the total loss (shorter window at the start)."""
        totals = np.array([b.total for b in self.loss_history])
        csum = np.concatenate([[0.0], np.cumsum(totals)])
        ends = np.arange(1, totals.size + 1)
        starts = np.maximum(0, ends - window)
        return (csum[ends] - csum[starts]) / (ends - starts)


# -- initialization ----------------------------------------------------------


def init_synthetic(dataset: GraphDataset, config: DistillConfig, rng: np.random.Generator) -> list[SyntheticGraph]:
    """``graphs_per_class`` graphs per class, each with ``mean_node_count`` nodes."""
    n = mean_node_count(dataset)
    d = dataset.feature_dim
    out = []
    for c in range(dataset.num_classes):
        pool = dataset.class_indices(c)
        if pool.size == 0:
            raise ContractError(f"class {c} has no training graphs")
        if config.init_mode == "random":
            for _ in range(config.graphs_per_class):
                feats = rng.normal(0.0, 0.1, size=(n, d))
                upper = np.triu(rng.normal(0.0, 0.1, size=(n, n)), k=1)
                out.append(SyntheticGraph(feats, upper, c))
            continue
        pooled = np.stack([dataset.graphs[i].features.mean(axis=0) for i in pool])
        picks = select_kcenter(pooled, np.zeros(pool.size, dtype=int), config.graphs_per_class)
        # classes smaller than graphs_per_class reuse their picks cyclically
        for slot in range(config.graphs_per_class):
            src = dataset.graphs[pool[picks[slot % len(picks)]]]
            k = min(n, src.node_count)
            feats = np.zeros((n, d))
            feats[:k] = src.features[:k]
            upper = np.full((n, n), -3.0)
            upper[:k, :k] = np.where(src.adjacency[:k, :k] > 0, 3.0, -3.0)
            out.append(SyntheticGraph(feats, np.triu(upper, k=1), c))
    return out


# -- differentiable pieces ---------------------------------------------------


def symmetric_logits(upper) -> Tensor:
    """Materialize ``U + U^T`` from the strict upper triangle of ``upper`` (``(..., n, n)``)."""
    u = ad.as_tensor(upper)
    n = u.shape[-1]
    tri = u * np.triu(np.ones((n, n)), k=1)
    return tri + ad.transpose(tri)


def soft_adjacency(graph):
    """Elementwise sigmoid of the symmetric logits with a zero diagonal.

    Takes a :class:`SyntheticGraph` (returns an array) or a tensor of upper
    logits (returns a differentiable tensor).
    """
    upper = graph.upper_logits if isinstance(graph, SyntheticGraph) else graph
    n = np.shape(upper.data if isinstance(upper, Tensor) else upper)[-1]
    out = ad.sigmoid(symmetric_logits(upper)) * (1.0 - np.eye(n))
    return out.data if isinstance(graph, SyntheticGraph) else out


@dataclass
class RealStatistics:
    attention_means: list[np.ndarray]
    head_mean: np.ndarray


def real_statistics(theta: ModelParams, gnn: GnnConfig, batch: GraphBatch, p: float) -> RealStatistics:
    acts = forward(theta, gnn, batch)
    means = [batch_attention_mean(f.data, p) for f in acts.conv_maps]
    return RealStatistics(means, acts.head_output.data.mean(axis=0))


def class_objective(
    theta: ModelParams,
    gnn: GnnConfig,
    real: RealStatistics,
    features: Tensor,
    upper_logits: Tensor,
    p: float,
) -> tuple[Tensor, Tensor, list[float]]:
    """Matching and head losses for one class; ``features`` is ``(k, n, d)``, ``upper_logits`` ``(k, n, n)``."""
    syn = forward(theta, gnn, GraphBatch.dense(soft_adjacency(upper_logits), features))
    stam, per_layer = stam_from_means(real.attention_means, layer_attention_means(syn, p))
    reg = reg_from_means(real.head_mean, ad.mean(syn.head_output, axis=0))
    return stam, reg, per_layer


def total_objective(
    theta: ModelParams,
    gnn: GnnConfig,
    reals: Sequence[RealStatistics],
    features: Sequence[Tensor],
    uppers: Sequence[Tensor],
    p: float,
    lam: float,
) -> LossBreakdown:
    """Class-summed ``stam + lam * reg`` with the differentiable objective attached."""
    stam = reg = None
    per_layer: list[float] = []
    for real, x, u in zip(reals, features, uppers):
        s, r, layers = class_objective(theta, gnn, real, x, u, p)
        stam = s if stam is None else stam + s
        reg = r if reg is None else reg + r
        per_layer = layers if not per_layer else [a + b for a, b in zip(per_layer, layers)]
    objective = stam + reg * lam
    return LossBreakdown(stam.item(), reg.item(), objective.item(), lam, per_layer, objective)


# -- main loop ---------------------------------------------------------------


class _ClassPool:
    """Padded arrays of one class's training graphs, so batches are fancy-indexed."""

    def __init__(self, dataset: GraphDataset, class_id: int):
        self.indices = dataset.class_indices(class_id)
        batch = GraphBatch.from_graphs(dataset.subset(self.indices))
        self.adjacency = batch.adjacency.data
        self.features = batch.features.data
        self.mask = batch.mask
        self.counts = batch.counts

    def batch(self, chosen: np.ndarray) -> GraphBatch:
        rows = np.searchsorted(self.indices, chosen)
        return GraphBatch(Tensor(self.adjacency[rows]), Tensor(self.features[rows]), self.mask[rows], self.counts[rows])


def distill(dataset: GraphDataset, config: DistillConfig, initial: list[SyntheticGraph] | None = None) -> DistillReport:
    """Run the distillation loop and return the learned synthetic set with its loss history."""
    start = time.perf_counter()
    gnn = config.gnn(dataset.num_classes)
    synthetic = initial if initial is not None else init_synthetic(dataset, config, derive_rng(config.seed, "init"))
    classes = list(range(dataset.num_classes))
    pools = [_ClassPool(dataset, c) for c in classes]
    members = [[g for g in synthetic if g.label == c] for c in classes]
    if any(not m for m in members):
        raise ContractError("every class needs at least one synthetic graph")
    features = [Tensor(np.stack([g.features for g in m]), requires_grad=True) for m in members]
    uppers = [Tensor(np.stack([np.triu(g.upper_logits, k=1) for g in m]), requires_grad=True) for m in members]

    history: list[LossBreakdown] = []
    digests: list[tuple[str, str]] = []
    for t in range(config.iterations):
        theta = init_params(gnn, dataset.feature_dim, derive_rng(config.seed, "theta", t))
        before = params_digest(theta)
        batch_rng = derive_rng(config.seed, "real-batch", t)
        reals = []
        for c in classes:
            chosen = sample_class_batch(dataset, c, config.real_batch_size, batch_rng).graph_indices
            reals.append(real_statistics(theta, gnn, pools[c].batch(chosen), config.p))

        breakdown = total_objective(theta, gnn, reals, features, uppers, config.p, config.lam)
        if not np.isfinite(breakdown.total):
            raise TrainingError(f"non-finite loss at iteration {t}: {breakdown.as_row()}")
        breakdown.objective.backward()
        for x, u in zip(features, uppers):
            x.data = ad.sgd_step([x.data], [x.grad], config.feature_lr)[0]
            u.data = ad.sgd_step([u.data], [u.grad], config.adjacency_lr)[0]
            x.zero_grad()
            u.zero_grad()
        breakdown.objective = None
        history.append(breakdown)
        digests.append((before, params_digest(theta)))
        if (t + 1) % 100 == 0:
            logger.info("iteration %d: total %.6f stam %.6f reg %.6f", t + 1, breakdown.total, breakdown.stam, breakdown.reg)

    learned = [
        SyntheticGraph(x.data[k].copy(), u.data[k].copy(), c)
        for c, x, u in zip(classes, features, uppers)
        for k in range(x.shape[0])
    ]
    return DistillReport(history, learned, time.perf_counter() - start, config, digests)


# -- export ------------------------------------------------------------------


def binarize(graph: SyntheticGraph, threshold: float = 0.5) -> np.ndarray:
    """``1`` where sigmoid(logit) is strictly above ``threshold``, zero diagonal."""
    adj = (soft_adjacency(graph) > threshold).astype(np.float64)
    np.fill_diagonal(adj, 0.0)
    return adj


def synthetic_to_dataset(graphs: Sequence[SyntheticGraph], num_classes: int, threshold: float = 0.5, name: str = "") -> GraphDataset:
    if not graphs:
        raise ContractError("no synthetic graphs to convert")
    converted = [Graph(binarize(g, threshold), g.features, g.label) for g in graphs]
    d = converted[0].features.shape[1]
    return GraphDataset(converted, num_classes, d, {"train": np.arange(len(converted))}, name)


def export_synthetic(
    graphs: Sequence[SyntheticGraph],
    path: str | os.PathLike | None = None,
    threshold: float = 0.5,
    num_classes: int | None = None,
    config: DistillConfig | None = None,
    metadata: dict | None = None,
) -> GraphDataset:
    """Binarize, optionally write ``{config, graphs: [{label, features, logits, adjacency}]}``.

    ``metadata`` entries are merged into the ``config`` block.
    """
    num_classes = num_classes or (max(g.label for g in graphs) + 1)
    dataset = synthetic_to_dataset(graphs, num_classes, threshold)
    if path is not None:
        doc = {
            "config": {
                **(asdict(config) if config else {}),
                **(metadata or {}),
                "threshold": threshold,
                "num_classes": num_classes,
            },
            "graphs": [
                {
                    "label": g.label,
                    "features": g.features.tolist(),
                    "logits": g.logits.tolist(),
                    "adjacency": b.adjacency.astype(int).tolist(),
                }
                for g, b in zip(graphs, dataset.graphs)
            ],
        }
        try:
            Path(path).write_text(json.dumps(doc))
        except OSError as exc:
            raise ExportError(f"cannot write {path}: {exc}") from exc
    return dataset


def load_synthetic(path: str | os.PathLike) -> tuple[list[SyntheticGraph], dict]:
    """Read a file written by :func:`export_synthetic`; returns the graphs and the config block."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"synthetic set not found: {path}")
    doc = json.loads(path.read_text())
    graphs = []
    for i, entry in enumerate(doc.get("graphs", [])):
        try:
            feats = np.array(entry["features"], dtype=np.float64)
            logits = np.array(entry["logits"], dtype=np.float64)
            graphs.append(SyntheticGraph(feats, np.triu(logits, k=1), int(entry["label"])))
        except (KeyError, ValueError, TypeError) as exc:
            raise IngestionError(f"$.graphs[{i}]: {exc}") from None
    return graphs, doc.get("config", {})
