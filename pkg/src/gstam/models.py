"""GCN and GIN graph classifiers built on the autodiff engine.

The forward pass works on a padded batch ``(B, m, ·)`` with a node mask, so
many small graphs go through each layer in a single matmul. It records the
post-ReLU node features of every convolution and the pre-activation output
of the linear head; the distillation losses read both.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, DimensionError

ARCHS = ("gcn", "gin")


@dataclass(frozen=True)
class GnnConfig:
    arch: str = "gcn"
    num_conv_layers: int = 3
    hidden_dim: int = 128
    output_dim: int = 2

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown architecture {self.arch!r}; expected one of {ARCHS}")
        if self.num_conv_layers < 1 or self.hidden_dim < 1 or self.output_dim < 1:
            raise ConfigError("num_conv_layers, hidden_dim and output_dim must be >= 1")

    @property
    def name(self) -> str:
        return f"{self.arch.upper()}-{self.num_conv_layers}C"

    @classmethod
    def from_name(cls, name: str, **overrides) -> "GnnConfig":
        """Parse ``gcn2``, ``GCN-3C``, ``gin`` (3 layers) or ``gin2``."""
        m = re.fullmatch(r"(gcn|gin)-?(\d+)?c?", name.strip().lower())
        if not m:
            raise ConfigError(f"cannot parse architecture name {name!r}")
        layers = int(m.group(2)) if m.group(2) else 3
        return cls(arch=m.group(1), num_conv_layers=layers, **overrides)


ModelParams = dict  # name -> np.ndarray, insertion-ordered


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: GnnConfig, feature_dim: int, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights and zero biases for ``config``."""
    if feature_dim < 1:
        raise ContractError(f"feature_dim must be >= 1, got {feature_dim}")
    params: ModelParams = {}
    width_in = feature_dim
    h = config.hidden_dim
    for layer in range(config.num_conv_layers):
        if config.arch == "gcn":
            params[f"conv{layer}.weight"] = _glorot(rng, width_in, h)
        else:
            params[f"conv{layer}.eps"] = np.zeros(())
            params[f"conv{layer}.mlp0.weight"] = _glorot(rng, width_in, h)
            params[f"conv{layer}.mlp0.bias"] = np.zeros(h)
            params[f"conv{layer}.mlp1.weight"] = _glorot(rng, h, h)
            params[f"conv{layer}.mlp1.bias"] = np.zeros(h)
        width_in = h
    params["head.weight"] = _glorot(rng, h, config.output_dim)
    params["head.bias"] = np.zeros(config.output_dim)
    return params


def params_as_tensors(params: ModelParams, requires_grad: bool = False) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


def params_digest(params: Mapping[str, np.ndarray]) -> str:
    import hashlib

    h = hashlib.sha256()
    for k in sorted(params):
        v = params[k].data if isinstance(params[k], Tensor) else params[k]
        h.update(k.encode())
        h.update(np.ascontiguousarray(v, dtype=np.float64).tobytes())
    return h.hexdigest()


# -- batching ----------------------------------------------------------------


@dataclass
class GraphBatch:
    """Zero-padded stack of graphs. ``mask`` is ``(B, m, 1)``; ``counts`` is ``(B, 1)``."""

    adjacency: Tensor
    features: Tensor
    mask: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_arrays(cls, adjacencies: Sequence[np.ndarray], features: Sequence[np.ndarray]) -> "GraphBatch":
        if len(adjacencies) != len(features) or not adjacencies:
            raise ContractError("need a non-empty, equal number of adjacencies and feature matrices")
        sizes = [a.shape[0] for a in adjacencies]
        width = features[0].shape[1]
        m = max(sizes)
        adj = np.zeros((len(sizes), m, m))
        feats = np.zeros((len(sizes), m, width))
        mask = np.zeros((len(sizes), m, 1))
        for b, (a, x) in enumerate(zip(adjacencies, features)):
            k = a.shape[0]
            if a.shape != (k, k) or x.shape != (k, width):
                raise DimensionError(f"graph {b}: adjacency {a.shape} and features {x.shape} disagree")
            adj[b, :k, :k] = a
            feats[b, :k] = x
            mask[b, :k] = 1.0
        return cls(Tensor(adj), Tensor(feats), mask, np.array(sizes, dtype=np.float64).reshape(-1, 1))

    @classmethod
    def from_graphs(cls, graphs) -> "GraphBatch":
        return cls.from_arrays([g.adjacency for g in graphs], [g.features for g in graphs])

    @classmethod
    def dense(cls, adjacency: Tensor, features: Tensor) -> "GraphBatch":
        """Batch of equally sized graphs that need no padding (e.g. synthetic ones)."""
        b, n = features.shape[0], features.shape[1]
        return cls(adjacency, features, np.ones((b, n, 1)), np.full((b, 1), float(n)))

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class LayerActivations:
    """Per-layer outputs of one forward pass.

    ``conv_maps[l]`` is ``(B, m, u_l)`` after ReLU; ``head_output`` is the
    ``(B, C)`` pre-activation output of the linear head.
    """

    conv_maps: list[Tensor]
    head_output: Tensor


def normalize_adjacency(adjacency) -> Tensor:
    """Symmetric GCN normalization ``D^-1/2 (A + I) D^-1/2``.

    Works on a single ``(m, m)`` matrix or a ``(B, m, m)`` stack and is
    differentiable in ``adjacency`` (needed for soft synthetic graphs).
    """
    a = ad.as_tensor(adjacency)
    m = a.shape[-1]
    a_hat = a + np.eye(m)
    inv_sqrt = ad.power(ad.sum(a_hat, axis=-1, keepdims=True), -0.5)
    return a_hat * inv_sqrt * ad.transpose(inv_sqrt)


def forward(params: Mapping, config: GnnConfig, batch: GraphBatch) -> LayerActivations:
    p = {k: ad.as_tensor(v) for k, v in params.items()}
    feature_dim = p["conv0.weight" if config.arch == "gcn" else "conv0.mlp0.weight"].shape[0]
    if batch.features.shape[-1] != feature_dim:
        raise ContractError(f"features have width {batch.features.shape[-1]}, model expects {feature_dim}")
    if batch.adjacency.shape[-1] != batch.features.shape[-2]:
        raise ContractError(f"adjacency {batch.adjacency.shape} does not match features {batch.features.shape}")

    h = batch.features
    maps = []
    if config.arch == "gcn":
        a_norm = normalize_adjacency(batch.adjacency)
        for layer in range(config.num_conv_layers):
            h = ad.relu(a_norm @ (h @ p[f"conv{layer}.weight"]))
            maps.append(h)
    else:
        for layer in range(config.num_conv_layers):
            agg = (1.0 + p[f"conv{layer}.eps"]) * h + batch.adjacency @ h
            z = ad.relu(agg @ p[f"conv{layer}.mlp0.weight"] + p[f"conv{layer}.mlp0.bias"])
            z = z @ p[f"conv{layer}.mlp1.weight"] + p[f"conv{layer}.mlp1.bias"]
            h = ad.relu(z) * batch.mask
            maps.append(h)
    pooled = ad.sum(h * batch.mask, axis=1) / batch.counts
    head = pooled @ p["head.weight"] + p["head.bias"]
    return LayerActivations(maps, head)


def forward_graph(params: Mapping, config: GnnConfig, adjacency, features) -> LayerActivations:
    """Unbatched forward: ``(m, m)`` adjacency and ``(m, d)`` features."""
    a, x = ad.as_tensor(adjacency), ad.as_tensor(features)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or x.ndim != 2 or x.shape[0] != a.shape[0]:
        raise ContractError(f"adjacency {a.shape} and features {x.shape} disagree")
    m = a.shape[0]
    batch = GraphBatch.dense(ad.reshape(a, (1, m, m)), ad.reshape(x, (1, m, x.shape[1])))
    acts = forward(params, config, batch)
    maps = [ad.reshape(f, f.shape[1:]) for f in acts.conv_maps]
    return LayerActivations(maps, ad.reshape(acts.head_output, (config.output_dim,)))


def predict(params: Mapping, config: GnnConfig, graphs, batch_size: int = 256) -> np.ndarray:
    """Class scores ``(N, C)`` (logits, no softmax) for a list of graphs."""
    out = []
    for start in range(0, len(graphs), batch_size):
        chunk = GraphBatch.from_graphs(graphs[start : start + batch_size])
        out.append(forward(params, config, chunk).head_output.data)
    return np.concatenate(out, axis=0)


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(params: ModelParams, config: GnnConfig, path: str | os.PathLike) -> None:
    doc = {
        "config": asdict(config),
        "weights": {k: {"shape": list(np.shape(v)), "data": np.ravel(v).tolist()} for k, v in params.items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, GnnConfig]:
    doc = json.loads(Path(path).read_text())
    config = GnnConfig(**doc["config"])
    params = {k: np.array(w["data"], dtype=np.float64).reshape(w["shape"]) for k, w in doc["weights"].items()}
    return params, config
