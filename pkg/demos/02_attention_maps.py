"""Attention maps of a random GCN make graphs of different sizes comparable.

A conv layer maps an m-node graph to an (m, u) feature map. The attention map
(|f|^p)^T |f|^p is u x u whatever m is, so a 12-node real graph and a
5-node synthetic graph can be compared layer by layer.
"""

import numpy as np

from gstam.data import Graph
from gstam.models import GnnConfig, GraphBatch, forward, init_params
from gstam.stam import attention_map, layer_attention_means, normalize_and_flatten, reg_loss, stam_loss

rng = np.random.default_rng(1)

print(attention_map(np.array([[1.0, -2.0], [3.0, 0.0]]), p=2).data)  # [[82, 4], [4, 16]]


def ring(m, d=3):
    adj = np.roll(np.eye(m), 1, axis=1)
    adj = adj + adj.T
    return Graph(adj, np.eye(d)[np.arange(m) % d], 0)


def star(m, d=3):
    adj = np.zeros((m, m))
    adj[0, 1:] = adj[1:, 0] = 1
    return Graph(adj, np.eye(d)[np.arange(m) % d], 0)


gnn = GnnConfig("gcn", num_conv_layers=3, hidden_dim=16, output_dim=2)
theta = init_params(gnn, feature_dim=3, rng=rng)

rings = forward(theta, gnn, GraphBatch.from_graphs([ring(m) for m in (6, 9, 12)]))
stars = forward(theta, gnn, GraphBatch.from_graphs([star(m) for m in (6, 9, 12)]))
big_ring = forward(theta, gnn, GraphBatch.from_graphs([ring(30)]))

for layer, f in enumerate(rings.conv_maps, 1):
    print(f"layer {layer}: feature map {f.shape} -> attention map {attention_map(f.data[0]).shape}")

# Node order does not matter.
f = rings.conv_maps[0].data[2]
print("permutation invariant:", np.array_equal(attention_map(f).data, attention_map(f[rng.permutation(len(f))]).data))

# Normalized maps ignore overall scale.
a = attention_map(f)
print("scale invariant:", np.allclose(normalize_and_flatten(a).data, normalize_and_flatten(a * 7.0).data))

# Matching loss: the rings against a much larger ring, then against stars.
print("loss(rings, 30-ring):   ", stam_loss(rings, big_ring)[0].item())
print("loss(rings, stars):     ", stam_loss(rings, stars)[0].item())
print("head loss(rings, stars):", reg_loss(rings, stars).item())
print("per-layer mean vector length:", [m.shape[0] for m in layer_attention_means(rings)])
