import json

import numpy as np
import pytest

from nsf.classifier import ClassifierTrainConfig
from nsf.config import RunConfig
from nsf.errors import StageError
from nsf.evaluate import evaluate
from nsf.pipeline import fit_nsf, run_pipeline
from nsf.synthgen import SyntheticConfig, derive_seed, generate
from nsf.transform import TransformTrainConfig


def test_programmatic_fit(small_synth):
    model = fit_nsf(small_synth, seed=1)
    assert model.transform_fit.status == "ok"
    assert set(model.timings) >= {"centroids", "groups", "neutralize", "fit-transform", "fit-debiased"}
    test = generate(SyntheticConfig(n=2000, seed=derive_seed(11, 1)))
    rep = evaluate(model.debiased, test, model.transform)
    assert rep.worst_group_accuracy >= 0.8


def test_random_grouping_control(small_synth):
    model = fit_nsf(small_synth, seed=1, grouping="random", train_erm=False)
    assert model.erm is None and model.grouping == "random"
    with pytest.raises(ValueError):
        fit_nsf(small_synth, grouping="other")


def test_stage_error_names_stage_and_keeps_outputs(tmp_path):
    cfg = RunConfig(
        output=tmp_path / "out",
        synth=SyntheticConfig(n=300),
        transform=TransformTrainConfig(learning_rate=1e200, steps=3),
        classifier=ClassifierTrainConfig(steps=5),
    )
    with pytest.raises(StageError) as exc:
        run_pipeline(cfg)
    assert exc.value.stage == "fit-transform"
    assert json.loads((tmp_path / "out" / "run_config.json").read_text())["synth"]["n"] == 300


def test_run_pipeline_outputs(tmp_path):
    cfg = RunConfig(
        output=tmp_path / "out",
        synth=SyntheticConfig(n=600),
        transform=TransformTrainConfig(steps=200),
        classifier=ClassifierTrainConfig(steps=200),
        seeds=[4],
        random_group_ablation=False,
        discard_fractions=[0.25],
    )
    res = run_pipeline(cfg)
    assert res.summary["seeds"] == [4]
    assert "random_groups" not in res.summary
    assert list(res.summary["discard_sweep"]) == ["lowest_w@0.25", "random@0.25"]
    assert (res.output_dir / "summary.txt").read_text().startswith("seeds: [4]")
    assert np.isfinite(res.summary["grid"]["debiased/transformed"]["mean_accuracy"]["mean"])
