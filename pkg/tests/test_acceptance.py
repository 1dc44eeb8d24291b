"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is printed in the
terminal summary. The MUTAG checks run the full default protocol and take a
few minutes.
"""

import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from gstam import autodiff as ad
from gstam.autodiff import Tensor
from gstam.cli import main as cli_main
from gstam.coreset import select_herding, select_kcenter, select_random
from gstam.data import Graph, load_tu_dataset, random_split
from gstam.distill import DistillConfig, distill, export_synthetic, real_statistics, total_objective
from gstam.evaluation import CondensedSet, EvalConfig, evaluate_condensed, roc_auc
from gstam.models import GnnConfig, GraphBatch, LayerActivations, init_params
from gstam.stam import attention_map, reg_loss, stam_loss

from helpers import central_difference, random_graph, relative_error

MUTAG_DIR = Path(__file__).resolve().parents[1] / "data" / "MUTAG"
MUTAG_SPLIT_SEED = 0
REPEATS = 5


@pytest.fixture(scope="module")
def mutag():
    return random_split(load_tu_dataset(MUTAG_DIR, "MUTAG"), seed=MUTAG_SPLIT_SEED)


@pytest.fixture(scope="module")
def gstam_mutag(mutag):
    """Default GSTAM on MUTAG, 1 graph/class, 5 distill repeats x 10 eval models."""
    start = time.perf_counter()
    sets, reports = [], []
    for r in range(REPEATS):
        report = distill(mutag, DistillConfig(graphs_per_class=1, seed=r))
        reports.append(report)
        sets.append(CondensedSet(export_synthetic(report.synthetic, num_classes=2).graphs))
    result = evaluate_condensed(mutag, sets, EvalConfig())
    return result, time.perf_counter() - start, reports


# -- 1 -------------------------------------------------------------------------


def test_criterion_1_objective_gradient(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    reals = [Graph(random_graph(rng, m, 0.6), rng.random((m, 3)), 0) for m in (4, 6)]
    worst = 0.0
    for arch in ("gcn", "gin"):
        gnn = GnnConfig(arch, 3, 8, 2)
        theta = init_params(gnn, 3, rng)
        stats = [real_statistics(theta, gnn, GraphBatch.from_graphs(reals), 2.0)]
        feats = rng.random((1, 5, 3))
        upper = np.triu(rng.standard_normal((1, 5, 5)), 1)
        x, u = Tensor(feats, requires_grad=True), Tensor(upper, requires_grad=True)
        total_objective(theta, gnn, stats, [x], [u], 2.0, 0.1).objective.backward()
        fx = lambda v: total_objective(theta, gnn, stats, [Tensor(v)], [Tensor(upper)], 2.0, 0.1).total
        fu = lambda v: total_objective(theta, gnn, stats, [Tensor(feats)], [Tensor(v)], 2.0, 0.1).total
        tri = np.triu(np.ones((5, 5)), 1).astype(bool)
        worst = max(
            worst,
            relative_error(x.grad, central_difference(fx, feats, eps=1e-5)),
            relative_error(u.grad[0][tri], central_difference(fu, upper, eps=1e-5)[0][tri]),
        )
    elapsed = time.perf_counter() - start
    passed = worst < 1e-4 and elapsed < 10
    acceptance_log(1, passed, f"max relative error {worst:.2e} (< 1e-4), {elapsed:.1f}s (< 10s)")
    assert passed


# -- 2 -------------------------------------------------------------------------


def test_criterion_2_attention_algebra(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst_asym, min_eig, perm_exact = 0.0, np.inf, True
    for _ in range(1000):
        m, u = int(rng.integers(1, 30)), int(rng.integers(1, 16))
        f = rng.standard_normal((m, u)) * (rng.random((m, u)) > 0.3)
        a = attention_map(f, 2).data
        worst_asym = max(worst_asym, float(np.max(np.abs(a - a.T))))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(a).min()))
        perm_exact &= np.array_equal(attention_map(f[rng.permutation(m)], 2).data, a)
    worked = attention_map(np.array([[1.0, -2.0], [3.0, 0.0]]), 2).data.tolist() == [[82.0, 4.0], [4.0, 16.0]]
    elapsed = time.perf_counter() - start
    passed = worst_asym < 1e-12 and min_eig > -1e-9 and perm_exact and worked and elapsed < 5
    acceptance_log(
        2, passed,
        f"asymmetry {worst_asym:.1e}, min eigenvalue {min_eig:.1e}, permutation exact {perm_exact}, "
        f"worked example {worked}, {elapsed:.1f}s",
    )
    assert passed


# -- 3 -------------------------------------------------------------------------


def test_criterion_3_loss_identities(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    maps = [rng.random((4, 6, 5)), rng.random((4, 6, 5))]
    heads = rng.random((4, 2))
    real = LayerActivations([Tensor(m) for m in maps], Tensor(heads))
    same = LayerActivations([Tensor(m) for m in maps], Tensor(heads))
    shifted = LayerActivations([Tensor(m) for m in maps], Tensor(heads + 0.5))
    equal_stats = stam_loss(real, same)[0].item() == 0.0 and reg_loss(real, same).item() == 0.0
    head_only = stam_loss(real, shifted)[0].item() == 0.0 and reg_loss(real, shifted).item() > 0.0
    elapsed = time.perf_counter() - start
    passed = equal_stats and head_only and elapsed < 1
    acceptance_log(3, passed, f"equal statistics give zero {equal_stats}, head-only difference {head_only}, {elapsed:.2f}s")
    assert passed


# -- 4 -------------------------------------------------------------------------


def test_criterion_4_theta_never_updated(mutag, acceptance_log):
    report = distill(mutag, DistillConfig(iterations=50, seed=0))
    unchanged = sum(before == after for before, after in report.theta_digests)
    passed = unchanged == 50 == len(report.theta_digests)
    acceptance_log(4, passed, f"theta digest unchanged in {unchanged}/50 updates")
    assert passed


# -- 5 and 6 -------------------------------------------------------------------


def test_criterion_5_mutag_accuracy(gstam_mutag, acceptance_log):
    result, elapsed, _ = gstam_mutag
    passed = result.mean >= 0.80 and len(result.scores) == 50 and elapsed < 20 * 60
    acceptance_log(
        5, passed,
        f"GSTAM MUTAG 1/class accuracy {100 * result.mean:.2f} ± {100 * result.std:.2f} over "
        f"{len(result.scores)} runs (>= 80.00), {elapsed / 60:.1f} min (< 20)",
    )
    assert passed


def test_criterion_6_beats_random(mutag, gstam_mutag, acceptance_log):
    start = time.perf_counter()
    sets = []
    for r in range(REPEATS):
        idx = select_random(mutag, 1, seed=r)
        sets.append(CondensedSet(mutag.subset(idx), "random", idx))
    random_result = evaluate_condensed(mutag, sets, EvalConfig())
    gstam_result, gstam_time, _ = gstam_mutag
    gap = 100 * (gstam_result.mean - random_result.mean)
    elapsed = gstam_time + time.perf_counter() - start
    passed = gap >= 5.0 and elapsed < 30 * 60
    acceptance_log(
        6, passed,
        f"GSTAM {100 * gstam_result.mean:.2f} vs Random {100 * random_result.mean:.2f} "
        f"± {100 * random_result.std:.2f}, gap {gap:.2f} points (>= 5), {elapsed / 60:.1f} min (< 30)",
    )
    assert passed


def test_mutag_smoothed_loss_trends_down(gstam_mutag):
    for report in gstam_mutag[2]:
        smooth = report.smoothed_loss(window=100)
        assert smooth[-1] < smooth[99]


# -- 7 -------------------------------------------------------------------------


def _herding_objective(x, subset):
    return np.linalg.norm(x.mean(axis=0) - x[list(subset)].mean(axis=0))


def _covering_radius(x, centers):
    d = np.linalg.norm(x[:, None, :] - x[None, list(centers), :], axis=2)
    return d.min(axis=1).max()


def test_criterion_7_coreset_oracles(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    herding_ok = kcenter_ok = 0
    trials = 100
    for _ in range(trials):
        x = rng.standard_normal((10, 2))
        chosen = select_herding(x, np.zeros(10, int), 3).tolist()
        ok = chosen[:1] == [min(range(10), key=lambda j: (_herding_objective(x, [j]), j))]
        for k in range(2, 4):
            prefix = chosen[: k - 1]
            extensions = [prefix + [j] for j in range(10) if j not in prefix]
            ok &= min(extensions, key=lambda s: (_herding_objective(x, s), s[-1]))[-1] == chosen[k - 1]
        herding_ok += ok

        y = rng.standard_normal((8, 2))
        k = int(rng.integers(1, 5))
        greedy = _covering_radius(y, select_kcenter(y, np.zeros(8, int), k))
        optimum = min(_covering_radius(y, c) for c in itertools.combinations(range(8), k))
        kcenter_ok += greedy <= 2 * optimum + 1e-12
    elapsed = time.perf_counter() - start
    passed = herding_ok == trials and kcenter_ok == trials and elapsed < 5
    acceptance_log(
        7, passed,
        f"herding matches exhaustive step oracle {herding_ok}/{trials}, "
        f"k-center within 2x optimal radius {kcenter_ok}/{trials}, {elapsed:.1f}s",
    )
    assert passed


# -- 8 -------------------------------------------------------------------------


def test_criterion_8_roc_auc(acceptance_log):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 60))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = rng.integers(0, 10, n) / 9.0 if rng.random() < 0.5 else rng.random(n)
        pos, neg = scores[labels == 1], scores[labels == 0]
        brute = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg) / (pos.size * neg.size)
        worst = max(worst, abs(roc_auc(scores, labels) - brute))
    ties = roc_auc(np.full(9, 0.42), [0, 1] * 4 + [1])
    passed = worst < 1e-12 and ties == 0.5
    acceptance_log(8, passed, f"max |AUC - pair count| {worst:.1e} over 200 vectors, all-ties AUC {ties}")
    assert passed


# -- 9 -------------------------------------------------------------------------


def test_criterion_9_bit_identical_distill(tmp_path, acceptance_log):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli_main(["distill", "--dataset", str(MUTAG_DIR), "--gpc", "1", "--seed", "0", "--iters", "25", "--out", str(out)]) == 0

    def comparable(out):
        doc = json.loads((out / "manifest.json").read_text())
        doc.pop("wall_time_seconds")
        doc.pop("argv")
        return doc

    same_manifest = comparable(outs[0]) == comparable(outs[1])
    identical = (outs[0] / "synthetic.json").read_bytes() == (outs[1] / "synthetic.json").read_bytes()
    passed = same_manifest and identical
    acceptance_log(9, passed, f"manifests match {same_manifest}, synthetic.json bit-identical {identical}")
    assert passed
