"""Random, Herding and K-Center subsets of MUTAG and how well a GCN trains on them."""

from pathlib import Path

import numpy as np

from gstam.coreset import compute_embeddings, select_coreset, select_herding, select_kcenter
from gstam.data import load_tu_dataset, random_split
from gstam.evaluation import CondensedSet, EvalConfig, evaluate_condensed

# Toy picture first: two blobs in 2-D.
rng = np.random.default_rng(0)
points = np.vstack([rng.normal(0, 0.3, (20, 2)), rng.normal(4, 0.3, (5, 2))])
labels = np.zeros(len(points), dtype=int)
print("herding picks  ", select_herding(points, labels, 3))  # hugs the overall mean
print("k-center picks ", select_kcenter(points, labels, 3))  # reaches the small blob

data = Path(__file__).resolve().parents[1] / "data" / "MUTAG"
mutag = random_split(load_tu_dataset(data, "MUTAG"), seed=0)
train = mutag.indices("train")
emb = compute_embeddings(mutag, train, epochs=50)
print("embedding table:", emb.shape)

cfg = EvalConfig(eval_models_per_set=3, distill_repeats=1, epochs=200)
for method in ("random", "herding", "kcenter"):
    idx = select_coreset(mutag, method, per_class=10, seed=0)
    res = evaluate_condensed(mutag, [CondensedSet(mutag.subset(idx), method, idx)], cfg)
    print(f"{method:8s} 10/class -> {res}")
