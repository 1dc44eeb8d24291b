"""Structural attention maps and the two matching losses.

A layer's node-feature map ``f`` (``m x u``) becomes the ``u x u`` matrix
``(|f|^p)^T |f|^p``. Its size does not depend on the node count, so real
graphs and synthetic graphs with a different number of nodes can be
compared directly. The matching loss compares batch means of the L2
normalized, flattened maps layer by layer; the head loss compares batch
means of the classifier output.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, NumericError
from .models import LayerActivations

Activations = Union[LayerActivations, Sequence[LayerActivations]]


def attention_map(conv_map, p: float = 2.0) -> Tensor:
    """``(|f|^p)^T |f|^p`` for an ``(m, u)`` map or a ``(B, m, u)`` stack."""
    if p <= 0:
        raise ContractError(f"p must be positive, got {p}")
    if isinstance(conv_map, Tensor):
        f = conv_map
        if not np.all(np.isfinite(f.data)):
            raise NumericError("feature map contains NaN or Inf")
    else:
        try:
            f = Tensor(conv_map)
        except NumericError:
            raise NumericError("feature map contains NaN or Inf") from None
    g = ad.power(ad.absolute(f), p)
    # Gram sums depend on row order in the last bits; sorting rows by content
    # makes the map bit-identical under any node permutation.
    g = ad.permute_rows(g, canonical_row_order(g.data))
    return ad.transpose(g) @ g


def canonical_row_order(x: np.ndarray) -> np.ndarray:
    """Permutation along axis -2 that sorts rows by their byte content."""
    rows = np.ascontiguousarray(x)
    keys = rows.view(np.dtype((np.void, rows.shape[-1] * rows.itemsize)))[..., 0]
    return np.argsort(keys, axis=-1, kind="stable")


def normalize_and_flatten(attn) -> Tensor:
    """Row-major flatten of the last two axes, then divide by the L2 norm.

    An all-zero map stays all-zero instead of producing NaN.
    """
    a = ad.as_tensor(attn)
    u = a.shape[-1]
    z = ad.reshape(a, a.shape[:-2] + (u * a.shape[-2],))
    norm = ad.l2_norm(z, axis=-1, keepdims=True)
    guard = (norm.data == 0.0).astype(np.float64)
    return z / (norm + guard)


def _as_list(acts: Activations) -> list[LayerActivations]:
    return [acts] if isinstance(acts, LayerActivations) else list(acts)


def layer_attention_means(acts: Activations, p: float = 2.0) -> list[Tensor]:
    """Per conv layer, the batch mean of normalized attention vectors."""
    items = _as_list(acts)
    if not items:
        raise ContractError("activation batch is empty")
    n_layers = len(items[0].conv_maps)
    means = []
    for layer in range(n_layers):
        total, count = None, 0
        for item in items:
            if len(item.conv_maps) != n_layers:
                raise ContractError("activation sets have different numbers of layers")
            f = item.conv_maps[layer]
            z = normalize_and_flatten(attention_map(f, p))
            if z.ndim == 2:
                part, k = ad.sum(z, axis=0), z.shape[0]
            else:
                part, k = z, 1
            total = part if total is None else total + part
            count += k
        means.append(total * (1.0 / count))
    return means


def batch_attention_mean(conv_map: np.ndarray, p: float = 2.0) -> np.ndarray:
    """Array-only batch mean of normalized attention vectors for a ``(B, m, u)`` stack.

    Equal to one entry of :func:`layer_attention_means` up to rounding, but
    never forms the ``B`` separate ``u x u`` maps: the Frobenius norm of
    ``g^T g`` equals that of the smaller ``g g^T``, and the normalized mean is
    a single product of the row-scaled stacked rows.
    """
    if p <= 0:
        raise ContractError(f"p must be positive, got {p}")
    f = np.asarray(conv_map, dtype=np.float64)
    if f.ndim != 3:
        raise ContractError(f"expected a (B, m, u) stack, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise NumericError("feature map contains NaN or Inf")
    b, _, u = f.shape
    g = np.abs(f) ** p
    if f.shape[1] <= u:
        kernel = g @ np.swapaxes(g, 1, 2)
    else:
        kernel = np.swapaxes(g, 1, 2) @ g
    norms = np.sqrt(np.einsum("bij,bij->b", kernel, kernel))
    scale = 1.0 / np.sqrt(norms + (norms == 0.0))
    rows = (g * scale[:, None, None]).reshape(-1, u)
    return (rows.T @ rows).reshape(-1) / b


def _head_mean(acts: Activations) -> Tensor:
    items = _as_list(acts)
    if not items:
        raise ContractError("activation batch is empty")
    total, count = None, 0
    for item in items:
        h = item.head_output
        part, k = (ad.sum(h, axis=0), h.shape[0]) if h.ndim == 2 else (h, 1)
        total = part if total is None else total + part
        count += k
    return total * (1.0 / count)


def stam_from_means(real_means: Sequence, syn_means: Sequence) -> tuple[Tensor, list[float]]:
    if len(real_means) != len(syn_means):
        raise ContractError(f"real has {len(real_means)} conv layers, synthetic has {len(syn_means)}")
    total = None
    per_layer = []
    for r, s in zip(real_means, syn_means):
        r, s = ad.as_tensor(r), ad.as_tensor(s)
        if r.shape != s.shape:
            raise ContractError(f"layer width mismatch: {r.shape} vs {s.shape}")
        term = ad.sum(ad.power(r - s, 2))
        per_layer.append(term.item())
        total = term if total is None else total + term
    return total, per_layer


def stam_loss(real_acts: Activations, syn_acts: Activations, p: float = 2.0) -> tuple[Tensor, list[float]]:
    """Squared distance between mean normalized attention maps, summed over conv layers.

    The classifier head is not part of this loss. Returns the scalar tensor
    and the per-layer contributions.
    """
    return stam_from_means(layer_attention_means(real_acts, p), layer_attention_means(syn_acts, p))


def reg_from_means(real_mean, syn_mean) -> Tensor:
    r, s = ad.as_tensor(real_mean), ad.as_tensor(syn_mean)
    if r.shape != s.shape:
        raise ContractError(f"head width mismatch: {r.shape} vs {s.shape}")
    return ad.sum(ad.power(r - s, 2))


def reg_loss(real_heads, syn_heads) -> Tensor:
    """Squared distance between the batch means of head outputs.

    Accepts ``(B, C)`` arrays/tensors or activation sets.
    """
    def mean_of(h):
        if isinstance(h, LayerActivations) or (isinstance(h, (list, tuple)) and h and isinstance(h[0], LayerActivations)):
            return _head_mean(h)
        t = ad.as_tensor(h)
        return ad.mean(t, axis=0) if t.ndim == 2 else t

    return reg_from_means(mean_of(real_heads), mean_of(syn_heads))


@dataclass
class LossBreakdown:
    stam: float
    reg: float
    total: float
    lam: float
    per_layer: list[float] = field(default_factory=list)
    objective: Tensor | None = field(default=None, repr=False, compare=False)

    def as_row(self) -> dict:
        row = {"stam": self.stam, "reg": self.reg, "total": self.total}
        row.update({f"layer{i}": v for i, v in enumerate(self.per_layer)})
        return row


def total_loss(stam, reg, lam: float = 0.1, per_layer: Sequence[float] = ()) -> LossBreakdown:
    """``stam + lam * reg``; keeps the differentiable tensor when given tensors."""
    if lam < 0:
        raise ContractError(f"lambda must be >= 0, got {lam}")
    objective = None
    if isinstance(stam, Tensor) or isinstance(reg, Tensor):
        objective = ad.as_tensor(stam) + ad.as_tensor(reg) * lam
        s = ad.as_tensor(stam).item()
        r = ad.as_tensor(reg).item()
        total = objective.item()
    else:
        s, r = float(stam), float(reg)
        total = s + lam * r
    return LossBreakdown(s, r, total, lam, list(per_layer), objective)


def export_attention_maps(acts: LayerActivations, p: float, path: str | os.PathLike) -> None:
    """Debug dump of every layer's attention map as JSON ``[{layer, sample, matrix}]``."""
    records = []
    for layer, f in enumerate(acts.conv_maps):
        a = attention_map(f, p).data
        stack = a if a.ndim == 3 else a[None]
        for sample, matrix in enumerate(stack):
            records.append({"layer": layer, "sample": sample, "matrix": matrix.tolist()})
    Path(path).write_text(json.dumps(records))
