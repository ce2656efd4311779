"""End-to-end orchestration: grouping, neutralizing, transform, heads, evaluation, ablations."""

from __future__ import annotations

import csv
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .artifacts import ArtifactBundle, save_bundle
from .classifier import (
    ClassifierTrainConfig,
    LinearClassifier,
    SamplerState,
    build_sampler,
    train_debiased_head,
    train_erm_head,
)
from .config import RunConfig, check_output_dir
from .datasets import EmbeddingDataset, read_dataset
from .errors import NoBiasDetected, StageError
from .evaluate import ablation_grid, channel_discard_sweep, evaluate, accuracy_only, grid_rows, write_rows
from .grouping import (
    CentroidSet,
    GroupAssignment,
    assign_groups,
    bias_presence,
    compute_centroids,
    shuffle_assignment,
)
from .neutralize import estimate_invariant
from .synthgen import GROUP_IDS, derive_seed, generate, make_rng
from .transform import TransformFit, TransformTrainConfig, train_transform

log = logging.getLogger(__name__)

HELDOUT_STREAM = 1
SAMPLER_STREAM = 2
SHUFFLE_STREAM = 3


@contextmanager
def stage(name, timings):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - start


@dataclass
class NSFModel:
    centroids: CentroidSet
    assignment: GroupAssignment
    bias_report: dict
    transform_fit: TransformFit
    sampler: SamplerState
    debiased: LinearClassifier
    erm: LinearClassifier | None = None
    grouping: str = "true"
    timings: dict = field(default_factory=dict)

    @property
    def transform(self):
        return self.transform_fit.transform

    def bundle(self, metadata=None):
        return ArtifactBundle(self.transform, self.erm, self.debiased, self.centroids, dict(metadata or {}))


def fit_nsf(
    train: EmbeddingDataset,
    transform_config: TransformTrainConfig = TransformTrainConfig(),
    classifier_config: ClassifierTrainConfig = ClassifierTrainConfig(),
    seed=0,
    grouping="true",
    sampler_reference="invariant",
    train_erm=True,
) -> NSFModel:
    """Fit every learned component on one training set.

    ``grouping="random"`` is the control where each sample inherits the
    U/V membership of a random same-class sample before neutralizing.
    """
    if grouping not in ("true", "random"):
        raise ValueError("grouping must be 'true' or 'random'")
    timings = {}
    clf_cfg = replace(classifier_config, seed=seed)
    with stage("centroids", timings):
        centroids = compute_centroids(train)
    with stage("groups", timings):
        assignment = assign_groups(train, centroids)
        if grouping == "random":
            assignment = shuffle_assignment(assignment, train.labels, make_rng(derive_seed(seed, SHUFFLE_STREAM)))
        report = bias_presence(assignment)
    with stage("neutralize", timings):
        try:
            centroids = estimate_invariant(train, assignment, centroids)
        except NoBiasDetected as exc:
            log.warning("%s", exc)
    with stage("fit-transform", timings):
        fit = train_transform(train, assignment, centroids, replace(transform_config, seed=seed))
    erm = None
    if train_erm:
        with stage("fit-erm", timings):
            erm = train_erm_head(train, clf_cfg)
    with stage("sampler", timings):
        sampler = build_sampler(
            train, fit.transform, centroids, assignment,
            batch_size=clf_cfg.batch_size or 128,
            seed=derive_seed(seed, SAMPLER_STREAM),
            reference=sampler_reference,
        )
    with stage("fit-debiased", timings):
        debiased = train_debiased_head(train, fit.transform, sampler, clf_cfg)
    return NSFModel(centroids, assignment, report, fit, sampler, debiased, erm, grouping, timings)


def groups_report(model: NSFModel):
    c = model.centroids
    out = dict(model.bias_report)
    out["centroids"] = {
        "biased": c.biased.tolist(),
        "invariant": None if c.invariant is None else [
            row.tolist() if ok else None for row, ok in zip(c.invariant, c.valid_mask)
        ],
        "valid_mask": c.valid_mask.tolist(),
    }
    return out


def write_assignments(dataset, assignment, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "label", "rel_distance", "soft_assign", "membership", "mask"])
        for i in range(dataset.n):
            w.writerow([
                i, int(dataset.labels[i]), repr(float(assignment.rel_distance[i])),
                int(assignment.soft_assign[i]), "U" if assignment.in_u[i] else "V",
                int(assignment.sample_mask[i]),
            ])


def write_loss_trace(losses, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for i, v in enumerate(losses):
            w.writerow([i, repr(float(v))])


def _eval(clf, data, transform, expected):
    if data.groups is None:
        return accuracy_only(clf, data, transform)
    return evaluate(clf, data, transform, expected)


@dataclass
class SeedResult:
    seed: int
    grid: dict
    discard: list
    random_groups: object = None
    status: str = "ok"
    sampler: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


@dataclass
class RunResult:
    output_dir: Path
    summary: dict
    seeds: list


def _datasets(config: RunConfig, seed):
    if config.synth is not None:
        train = generate(replace(config.synth, seed=seed))
        n_test = config.n_test or config.synth.n
        test = generate(replace(config.synth, seed=derive_seed(seed, HELDOUT_STREAM), n=n_test))
        return train, test, GROUP_IDS, "synthetic held-out"
    train = read_dataset(config.data, config.data_format)
    if config.eval_data is not None:
        return train, read_dataset(config.eval_data, config.data_format), None, str(config.eval_data)
    return train, train, None, "training data (no eval set given)"


def run_seed(config: RunConfig, seed, out: Path) -> SeedResult:
    timings = {}
    out.mkdir(parents=True, exist_ok=True)
    with stage("load", timings):
        train, test, expected, eval_source = _datasets(config, seed)
    model = fit_nsf(
        train, config.transform, config.classifier, seed=seed,
        sampler_reference=config.sampler_reference,
    )
    timings.update(model.timings)
    meta = {
        "seed": seed,
        "run_config": config.describe(),
        "transform_status": model.transform_fit.status,
        "optimizer": model.transform_fit.optimizer,
        "threads": 1,
    }
    with stage("write-artifacts", timings):
        save_bundle(model.bundle(meta), out / "bundle.npz")
        report = groups_report(model)
        report["sampler"] = model.sampler.summary()
        (out / "groups.json").write_text(json.dumps(report, indent=2))
        write_assignments(train, model.assignment, out / "assignments.csv")
        write_loss_trace(model.transform_fit.losses, out / "transform_loss.csv")
    with stage("eval", timings):
        bundle = model.bundle()
        grid = ablation_grid(test, bundle, expected)
        for (head, feats), rep in grid.items():
            if rep is not None:
                rep.config_fingerprint = {"seed": seed, "eval_source": eval_source}
                rep.save(out / f"eval_{head}_{feats}.json")
        write_rows(grid_rows(grid), out / "ablation_grid.csv")
    with stage("discard-sweep", timings):
        discard = channel_discard_sweep(test, bundle, config.discard_fractions, seed=seed,
                                        expected_groups=expected)
        write_rows(discard, out / "discard_sweep.csv")
    random_rep = None
    if config.random_group_ablation:
        with stage("random-groups", timings):
            ctrl = fit_nsf(train, config.transform, config.classifier, seed=seed, grouping="random",
                           sampler_reference=config.sampler_reference, train_erm=False)
            random_rep = _eval(ctrl.debiased, test, ctrl.transform, expected)
            random_rep.save(out / "random_groups.json")
    (out / "timings.json").write_text(json.dumps(timings, indent=2))
    return SeedResult(seed, grid, discard, random_rep, model.transform_fit.status,
                      model.sampler.summary(), timings)


def _stats(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "n": len(vals)}


def summarize(results):
    grid = {}
    for key in results[0].grid:
        reps = [r.grid[key] for r in results]
        grid[f"{key[0]}/{key[1]}"] = {
            "worst_group_accuracy": _stats([None if x is None else x.worst_group_accuracy for x in reps]),
            "mean_accuracy": _stats([None if x is None else x.mean_accuracy for x in reps]),
        }
    summary = {"seeds": [r.seed for r in results], "grid": grid}
    gains = []
    for r in results:
        h, hp = r.grid[("erm", "raw")], r.grid[("debiased", "transformed")]
        if h is not None and hp is not None and h.worst_group_accuracy is not None:
            gains.append(hp.worst_group_accuracy - h.worst_group_accuracy)
    summary["wga_gain"] = _stats(gains)
    if results[0].random_groups is not None:
        summary["random_groups"] = {
            "worst_group_accuracy": _stats([r.random_groups.worst_group_accuracy for r in results]),
            "mean_accuracy": _stats([r.random_groups.mean_accuracy for r in results]),
        }
    sweep = {}
    for r in results:
        for row in r.discard:
            key = f"{row['strategy']}@{row['fraction']:g}"
            sweep.setdefault(key, {"wga": [], "mean": []})
            sweep[key]["wga"].append(row["worst_group_accuracy"])
            sweep[key]["mean"].append(row["mean_accuracy"])
    summary["discard_sweep"] = {
        k: {"worst_group_accuracy": _stats(v["wga"]), "mean_accuracy": _stats(v["mean"])}
        for k, v in sweep.items()
    }
    summary["groups_available"] = results[0].grid[("erm", "raw")].worst_group_accuracy is not None
    summary["transform_status"] = sorted({r.status for r in results})
    summary["stage_seconds"] = {
        k: float(np.mean([r.timings.get(k, 0.0) for r in results])) for k in results[0].timings
    }
    return summary


def _fmt(stat, scale=100.0):
    if stat is None:
        return "n/a"
    return f"{scale * stat['mean']:.2f} +/- {scale * stat['std']:.2f}"


def summary_text(summary):
    lines = [f"seeds: {summary['seeds']}"]
    if not summary["groups_available"]:
        lines.append("groups unavailable: worst-group accuracy not computed")
    lines.append(f"{'head/features':<24}{'WGA (%)':>20}{'mean acc (%)':>20}")
    for key, cell in summary["grid"].items():
        lines.append(f"{key:<24}{_fmt(cell['worst_group_accuracy']):>20}{_fmt(cell['mean_accuracy']):>20}")
    if summary.get("wga_gain"):
        lines.append(f"WGA gain h'(t(x)) over h(x): {_fmt(summary['wga_gain'])} points")
    if "random_groups" in summary:
        rg = summary["random_groups"]
        lines.append(f"random groups h'(t(x)): WGA {_fmt(rg['worst_group_accuracy'])}, "
                     f"mean {_fmt(rg['mean_accuracy'])}")
    for key, cell in summary["discard_sweep"].items():
        lines.append(f"discard {key:<16} WGA {_fmt(cell['worst_group_accuracy'])}, "
                     f"mean {_fmt(cell['mean_accuracy'])}")
    lines.append("mean stage seconds: " + ", ".join(f"{k}={v:.2f}" for k, v in summary["stage_seconds"].items()))
    return "\n".join(lines)


def run_pipeline(config: RunConfig) -> RunResult:
    msg = check_output_dir(config.output, create=True)
    if msg:
        raise StageError("setup", msg)
    out = Path(config.output)
    (out / "run_config.json").write_text(json.dumps(config.describe(), indent=2, default=str))
    results = []
    for seed in config.seeds:
        log.info("seed %d", seed)
        results.append(run_seed(config, seed, out / f"seed_{seed}"))
    summary = summarize(results)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    (out / "summary.txt").write_text(summary_text(summary) + "\n")
    return RunResult(out, summary, results)
