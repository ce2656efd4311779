"""Worst-group and mean accuracy, plus the head/feature ablation grid and discard sweeps."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifacts import ArtifactBundle
from .classifier import LinearClassifier, predict
from .datasets import EmbeddingDataset
from .errors import MissingGroupsError
from .transform import AffineTransform, discard_channels, discard_count

SCHEMA_VERSION = "nsf-eval/1"
DISCARD_STRATEGIES = ("lowest_w", "random")


@dataclass
class EvalReport:
    mean_accuracy: float
    worst_group_accuracy: float | None
    per_group: dict = field(default_factory=dict)
    empty_groups: list = field(default_factory=list)
    count: int = 0
    config_fingerprint: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema": SCHEMA_VERSION,
            "mean_accuracy": self.mean_accuracy,
            "worst_group_accuracy": self.worst_group_accuracy,
            "per_group": {str(g): {"accuracy": a, "count": c} for g, (a, c) in self.per_group.items()},
            "empty_groups": list(self.empty_groups),
            "count": self.count,
            "groups_available": self.worst_group_accuracy is not None,
            "config_fingerprint": self.config_fingerprint,
        }

    def to_text(self):
        lines = [f"samples: {self.count}", f"mean accuracy: {self.mean_accuracy:.4f}"]
        if self.worst_group_accuracy is None:
            lines.append("worst-group accuracy: groups unavailable")
        else:
            lines.append(f"worst-group accuracy: {self.worst_group_accuracy:.4f}")
            for g, (acc, n) in self.per_group.items():
                lines.append(f"  group {g}: {acc:.4f} ({n} samples)")
            if self.empty_groups:
                lines.append(f"  empty groups (excluded): {self.empty_groups}")
        return "\n".join(lines)

    def save(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        path.with_suffix(".txt").write_text(self.to_text() + "\n")


def group_report(predictions, labels, groups=None, expected_groups=None, fingerprint=None):
    """Accuracy report from predictions; the minimum runs over populated groups only."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    correct = predictions == labels
    mean = float(correct.mean())
    if groups is None:
        return EvalReport(mean, None, count=len(labels), config_fingerprint=fingerprint or {})
    groups = np.asarray(groups)
    present = np.unique(groups)
    per_group = {}
    for g in present:
        sel = groups == g
        per_group[int(g)] = (float(correct[sel].mean()), int(sel.sum()))
    empty = sorted(int(g) for g in (expected_groups or ()) if g not in per_group)
    wga = min(acc for acc, _ in per_group.values())
    return EvalReport(mean, wga, per_group, empty, len(labels), fingerprint or {})


def evaluate(
    classifier: LinearClassifier,
    dataset: EmbeddingDataset,
    transform: AffineTransform | None = None,
    expected_groups=None,
    fingerprint=None,
) -> EvalReport:
    if dataset.groups is None:
        raise MissingGroupsError(
            "dataset has no group labels; worst-group accuracy needs synthetic data "
            "or a labeled evaluation set (use accuracy_only for mean accuracy)"
        )
    preds = predict(classifier, dataset.features, transform)
    return group_report(preds, dataset.labels, dataset.groups, expected_groups, fingerprint)


def accuracy_only(classifier, dataset, transform=None, fingerprint=None) -> EvalReport:
    preds = predict(classifier, dataset.features, transform)
    return group_report(preds, dataset.labels, fingerprint=fingerprint)


def _evaluate_any(classifier, dataset, transform, expected_groups):
    if dataset.groups is None:
        return accuracy_only(classifier, dataset, transform)
    return evaluate(classifier, dataset, transform, expected_groups)


def ablation_grid(dataset: EmbeddingDataset, bundle: ArtifactBundle, expected_groups=None):
    """Reports for every {erm, debiased} head x {raw, transformed} feature pairing.

    Missing components leave ``None`` in the affected cells.
    """
    grid = {}
    for head in ("erm", "debiased"):
        clf = bundle.head(head)
        for feats in ("raw", "transformed"):
            if clf is None or (feats == "transformed" and bundle.transform is None):
                grid[(head, feats)] = None
                continue
            t = bundle.transform if feats == "transformed" else None
            grid[(head, feats)] = _evaluate_any(clf, dataset, t, expected_groups)
    return grid


def grid_rows(grid):
    rows = []
    for (head, feats), rep in grid.items():
        rows.append({
            "head": head,
            "features": feats,
            "mean_accuracy": None if rep is None else rep.mean_accuracy,
            "worst_group_accuracy": None if rep is None else rep.worst_group_accuracy,
            "available": rep is not None,
        })
    return rows


def channel_discard_sweep(dataset, bundle, fractions, seed=0, expected_groups=None):
    """h' evaluated on channel-discarded transforms for each fraction and strategy."""
    if bundle.transform is None or bundle.debiased is None:
        raise ValueError("discard sweep needs a trained transform and debiased head")
    rows = []
    for fraction in fractions:
        for strategy in DISCARD_STRATEGIES:
            t = discard_channels(bundle.transform, fraction, strategy, seed=seed)
            rep = _evaluate_any(bundle.debiased, dataset, t, expected_groups)
            rows.append({
                "fraction": float(fraction),
                "strategy": strategy,
                "discarded": discard_count(fraction, t.dim),
                "mean_accuracy": rep.mean_accuracy,
                "worst_group_accuracy": rep.worst_group_accuracy,
            })
    return rows


def write_rows(rows, path):
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
