"""Distill with a GCN, then train GCN and GIN classifiers on the same synthetic graphs."""

from pathlib import Path

from gstam.data import load_tu_dataset, random_split
from gstam.distill import DistillConfig, distill, export_synthetic
from gstam.evaluation import CondensedSet, EvalConfig, condensation_ratio, cross_architecture
from gstam.models import GnnConfig

data = Path(__file__).resolve().parents[1] / "data" / "MUTAG"
mutag = random_split(load_tu_dataset(data, "MUTAG"), seed=0)

train_arch = GnnConfig.from_name("GCN-3C", output_dim=mutag.num_classes)
sets = []
for r in range(2):
    report = distill(mutag, DistillConfig(graphs_per_class=2, iterations=200, seed=r))
    sets.append(CondensedSet(export_synthetic(report.synthetic, num_classes=mutag.num_classes).graphs))
print(f"condensation ratio {100 * condensation_ratio(len(sets[0].graphs), mutag):.1f}%")

cfg = EvalConfig(eval_models_per_set=3, distill_repeats=2, epochs=300, n_jobs=2)
test_archs = [GnnConfig.from_name(n) for n in ("GCN-3C", "GCN-2C", "GIN-3C")]
for name, res in cross_architecture(mutag, sets, train_arch, test_archs, cfg).items():
    print(f"{train_arch.name} -> {name}: {res}")
