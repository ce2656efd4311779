import csv
import json

import numpy as np
import pytest

from nsf.artifacts import load_bundle
from nsf.cli import main
from nsf.datasets import read_dataset

FAST = ["--set", "transform.steps=300", "--set", "classifier.steps=300"]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--n", "1500", "--seed", "1", "--out", str(d / "train.csv")]) == 0
    assert main(["synth", "--n", "1500", "--seed", "2", "--out", str(d / "test.bin")]) == 0
    return d


def test_convert_and_inspect(work, capsys):
    assert main(["convert", str(work / "test.bin"), str(work / "test.csv")]) == 0
    assert read_dataset(work / "test.csv") == read_dataset(work / "test.bin")
    assert main(["inspect", "--data", str(work / "train.csv")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["n"] == 1500 and info["has_groups"]


def test_stepwise_commands(work, capsys):
    tr, te, b = str(work / "train.csv"), str(work / "test.bin"), str(work / "b.npz")
    g = work / "groups.json"
    assert main(["groups", "--data", tr, "--out", str(g)]) == 0
    report = json.loads(g.read_text())
    assert report["any_bias"] and (work / "groups_assignments.csv").exists()
    assert main(["fit-transform", "--data", tr, "--groups", str(g), "--steps", "500", "--out", b]) == 0
    assert (work / "b_loss.csv").exists()
    assert main(["fit-erm", "--data", tr, "--steps", "300", "--out", b]) == 0
    assert main(["fit-debiased", "--data", tr, "--steps", "300", "--bundle", b]) == 0
    bundle = load_bundle(b)
    assert bundle.transform is not None and bundle.erm is not None and bundle.debiased is not None
    capsys.readouterr()

    assert main(["eval", "--data", te, "--bundle", b, "--out", str(work / "ev.json")]) == 0
    rep = json.loads((work / "ev.json").read_text())
    assert rep["worst_group_accuracy"] <= rep["mean_accuracy"]

    # Recompute worst-group accuracy from the prediction file.
    assert main(["predict", "--data", te, "--bundle", b, "--out", str(work / "p.csv")]) == 0
    data = read_dataset(te)
    rows = list(csv.DictReader(open(work / "p.csv")))
    correct = {}
    for row, g_id in zip(rows, data.groups):
        correct.setdefault(int(g_id), []).append(row["label"] == row["prediction"])
    brute = min(sum(v) / len(v) for v in correct.values())
    assert brute == rep["worst_group_accuracy"]

    assert main(["ablate", "--data", te, "--bundle", b, "--out", str(work / "ab.csv")]) == 0
    assert len(list(csv.DictReader(open(work / "ab.csv")))) == 4
    assert main(["discard-sweep", "--data", te, "--bundle", b, "--out", str(work / "ds.csv")]) == 0
    sweep = list(csv.DictReader(open(work / "ds.csv")))
    assert {r["strategy"] for r in sweep} == {"lowest_w", "random"}


def test_errors_exit_nonzero(work, capsys):
    assert main(["eval", "--data", str(work / "train.csv"), "--bundle", str(work / "none.npz"),
                 "--out", str(work / "x.json")]) == 1
    assert "error" in capsys.readouterr().err
    bad = work / "bad.csv"
    bad.write_text("label,f0\n0,zz\n")
    assert main(["inspect", "--data", str(bad)]) == 1
    assert "row 2" in capsys.readouterr().err


def test_validate(work, capsys):
    good = work / "good.ini"
    good.write_text(f"[synth]\n[run]\noutput = {work / 'vout'}\n")
    assert main(["validate", str(good)]) == 0
    bad = work / "bad.ini"
    bad.write_text(f"[synth]\nrho = 0.4\n[run]\nseeds =\noutput = {work}\n")
    assert main(["validate", str(bad)]) == 1
    out = capsys.readouterr().out
    assert "synth.rho" in out and "run.seeds" in out


def test_run_synthetic(work, capsys):
    out = work / "run_syn"
    argv = ["run", "--synth", "n=1500", "rho=0.9", "B=3", "dim=12", "--seeds", "2", "--out", str(out)] + FAST
    assert main(argv) == 0
    assert "WGA gain" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seeds"] == [0, 1] and summary["groups_available"]
    for name in ("bundle.npz", "groups.json", "assignments.csv", "transform_loss.csv",
                 "eval_debiased_transformed.json", "ablation_grid.csv", "discard_sweep.csv",
                 "random_groups.json", "timings.json"):
        assert (out / "seed_0" / name).exists(), name


def test_run_without_groups(work, capsys):
    data = read_dataset(work / "train.csv")
    from nsf.datasets import EmbeddingDataset, write_dataset
    bare = work / "bare.csv"
    write_dataset(EmbeddingDataset(data.features, data.labels, None, label_values=data.label_values), bare)
    out = work / "run_bare"
    assert main(["run", "--data", str(bare), "--seeds", "1", "--out", str(out)] + FAST) == 0
    assert "groups unavailable" in capsys.readouterr().out
    rep = json.loads((out / "seed_0" / "eval_erm_raw.json").read_text())
    assert rep["worst_group_accuracy"] is None and 0 <= rep["mean_accuracy"] <= 1


def test_run_missing_output_parent(work, capsys):
    argv = ["run", "--synth", "--out", str(work / "no" / "such" / "dir")]
    assert main(argv) == 1
    assert "does not exist" in capsys.readouterr().err


def test_rerun_is_deterministic(work):
    outs = []
    for name in ("det_a", "det_b"):
        out = work / name
        assert main(["run", "--synth", "n=800", "--seeds", "3", "--out", str(out)] + FAST) == 0
        s = json.loads((out / "summary.json").read_text())
        s.pop("stage_seconds")
        outs.append(s)
        b = load_bundle(out / "seed_2" / "bundle.npz")
        outs.append(b.debiased.weights.tobytes())
    assert outs[0] == outs[2] and outs[1] == outs[3]
    assert np.isfinite(outs[0]["wga_gain"]["mean"])
