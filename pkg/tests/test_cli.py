import csv
import json

import pytest

from gstam.cli import main

from helpers import two_class_tu

FAST = ["--hidden", "8", "--iters", "3", "--batch", "8"]
EVAL_FAST = ["--hidden", "8", "--epochs", "2", "--models", "2"]


@pytest.fixture
def toy_dir(tmp_path):
    return two_class_tu(tmp_path)


def run(*argv):
    return main([str(a) for a in argv])


def test_distill_writes_artifacts(toy_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert run("distill", "--dataset", toy_dir, "--gpc", 1, "--seed", 0, "--out", out, *FAST) == 0
    assert {p.name for p in out.iterdir()} == {"synthetic.json", "loss.csv", "manifest.json"}
    rows = list(csv.DictReader((out / "loss.csv").open()))
    assert len(rows) == 3 and set(rows[0]) >= {"iteration", "stam", "reg", "total"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["distill"]["lam"] == 0.1 and manifest["distill"]["p"] == 2.0
    assert len(manifest["dataset"]["sha256"]) == 64
    synthetic = json.loads((out / "synthetic.json").read_text())
    assert len(synthetic["graphs"]) == 2 and synthetic["config"]["threshold"] == 0.5


def test_distill_defaults_match_explicit_flags(toy_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run("distill", "--dataset", toy_dir, "--out", a, *FAST)
    run("distill", "--dataset", toy_dir, "--out", b, "--lambda", "0.1", "--p", "2", *FAST)
    assert (a / "synthetic.json").read_bytes() == (b / "synthetic.json").read_bytes()


def test_distill_is_bit_reproducible(toy_dir, tmp_path):
    for name in ("a", "b"):
        run("distill", "--dataset", toy_dir, "--out", tmp_path / name, "--seed", 4, *FAST)
    assert (tmp_path / "a" / "synthetic.json").read_bytes() == (tmp_path / "b" / "synthetic.json").read_bytes()


def test_missing_dataset_names_path(tmp_path, capsys):
    missing = tmp_path / "NOPE"
    assert run("distill", "--dataset", missing, "--out", tmp_path / "o") == 2
    assert str(missing) in capsys.readouterr().err


def test_config_file_with_flag_override(toy_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dataset": str(toy_dir), "iters": 2, "hidden": 8, "batch": 8, "lam": 0.5}))
    out = tmp_path / "o"
    assert run("distill", "--config", cfg, "--lambda", "0.2", "--out", out) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["distill"]["iterations"] == 2 and manifest["distill"]["lam"] == 0.2


def test_config_file_unknown_key(toy_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dataset": str(toy_dir), "speed": 3}))
    with pytest.raises(SystemExit) as exc:
        run("distill", "--config", cfg)
    assert exc.value.code == 2


def test_baseline_kcenter_size(toy_dir, tmp_path):
    out = tmp_path / "b"
    assert run("baseline", "--dataset", toy_dir, "--method", "kcenter", "--gpc", 3, "--hidden", 8, "--embed-epochs", 2, "--out", out) == 0
    doc = json.loads((out / "kcenter.json").read_text())
    assert len(doc["graphs"]) == 6 and len(doc["source_indices"]) == 6


def test_herding_ignores_seed(toy_dir, tmp_path):
    for seed in (1, 2):
        run("baseline", "--dataset", toy_dir, "--method", "herding", "--gpc", 2, "--seed", seed,
            "--split-seed", 0, "--hidden", 8, "--embed-epochs", 2, "--out", tmp_path / str(seed))
    assert (tmp_path / "1" / "herding.json").read_bytes() == (tmp_path / "2" / "herding.json").read_bytes()


def test_unknown_method_lists_choices(toy_dir, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("baseline", "--dataset", toy_dir, "--method", "dosc", "--out", tmp_path)
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "random" in err and "herding" in err and "kcenter" in err


def test_evaluate_synthetic_sets(toy_dir, tmp_path, capsys):
    paths = []
    for seed in (0, 1):
        out = tmp_path / f"d{seed}"
        run("distill", "--dataset", toy_dir, "--out", out, "--seed", seed, "--split-seed", 7, *FAST)
        paths.append(out / "synthetic.json")
    ev = tmp_path / "ev"
    assert run("evaluate", "--dataset", toy_dir, *paths, "--out", ev, *EVAL_FAST) == 0
    assert "±" in capsys.readouterr().out
    rows = list(csv.DictReader((ev / "results.csv").open()))
    assert len(rows) == 1 and rows[0]["runs"] == "4" and rows[0]["method"] == "gstam"
    assert json.loads((ev / "manifest.json").read_text())["dataset"]["split_seed"] == 7


def test_evaluate_cross_arch_rows(toy_dir, tmp_path):
    out = tmp_path / "d"
    run("distill", "--dataset", toy_dir, "--out", out, *FAST)
    ev = tmp_path / "ev"
    assert run("evaluate", "--dataset", toy_dir, out / "synthetic.json", "--cross-arch", "gcn2,gin", "--out", ev, *EVAL_FAST) == 0
    rows = list(csv.DictReader((ev / "results.csv").open()))
    assert [r["arch_test"] for r in rows] == ["GCN-2C", "GIN-3C"]


def test_evaluate_coreset_and_full(toy_dir, tmp_path):
    run("baseline", "--dataset", toy_dir, "--method", "random", "--gpc", 2, "--out", tmp_path / "b")
    ev = tmp_path / "ev"
    assert run("evaluate", "--dataset", toy_dir, tmp_path / "b" / "random.json", "--metric", "roc_auc", "--out", ev, *EVAL_FAST) == 0
    assert run("evaluate", "--dataset", toy_dir, "--full", "--out", ev, *EVAL_FAST) == 0
    rows = list(csv.DictReader((ev / "results.csv").open()))
    assert [r["method"] for r in rows] == ["random", "full"]


def test_evaluate_without_files_fails(toy_dir, tmp_path, capsys):
    assert run("evaluate", "--dataset", toy_dir, "--out", tmp_path) == 2
    assert "no condensed files" in capsys.readouterr().err


def test_module_entry_point(toy_dir, tmp_path):
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "gstam", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
