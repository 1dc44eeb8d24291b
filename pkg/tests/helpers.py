"""Test oracles that do not depend on the autodiff engine."""

import numpy as np


def central_difference(f, x, eps=1e-5):
    """Numerical gradient of scalar ``f`` at array ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x.copy())
        flat[i] = orig - eps
        fm = f(x.copy())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic, numeric, floor=1e-6):
    """Entrywise relative error; magnitudes below ``floor`` are divided by ``floor`` instead."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.max(np.abs(analytic - numeric) / scale)


def path_graph(m):
    a = np.zeros((m, m))
    for i in range(m - 1):
        a[i, i + 1] = a[i + 1, i] = 1.0
    return a


def random_graph(rng, m, p=0.5):
    upper = np.triu(rng.random((m, m)) < p, k=1).astype(float)
    return upper + upper.T


def write_tu_files(root, name, graphs):
    """Write ``(adjacency, node_labels, graph_label)`` triples in the 1-indexed TU text format."""
    edges, indicator, node_labels, graph_labels = [], [], [], []
    offset = 0
    for gid, (adj, labels, y) in enumerate(graphs, start=1):
        rows, cols = np.nonzero(adj)
        edges += [f"{offset + i + 1}, {offset + j + 1}" for i, j in zip(rows, cols)]
        indicator += [str(gid)] * adj.shape[0]
        node_labels += [str(int(v)) for v in labels]
        graph_labels.append(str(int(y)))
        offset += adj.shape[0]
    for suffix, lines in [("A", edges), ("graph_indicator", indicator), ("node_labels", node_labels), ("graph_labels", graph_labels)]:
        (root / f"{name}_{suffix}.txt").write_text("\n".join(lines) + "\n")
    return root


def two_class_tu(root, name="TOY", per_class=20, seed=0):
    """Class 1 graphs are denser and use node labels 0-1; class -1 graphs use labels 0-3."""
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(2 * per_class):
        positive = i % 2 == 0
        m = int(rng.integers(5, 10))
        adj = random_graph(rng, m, 0.5 if positive else 0.2)
        labels = rng.integers(0, 2 if positive else 4, m)
        graphs.append((adj, labels, 1 if positive else -1))
    (root / name).mkdir(parents=True, exist_ok=True)
    return write_tu_files(root / name, name, graphs)
