"""Class centroids, relative distances and the deviating/conforming split.

For a sample x of class y, the relative distance is
``|x - C_y|^2 - |x - C_q|^2`` with ``C_q`` the nearest centroid of any other
class. A positive value means x sits closer to another class than to its
own; those samples form the deviating set U_y, the rest the conforming set
V_y. Ties (distance exactly zero, or an argmin tie with the own class) are
resolved in favour of the own class, so they land in V.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import EmbeddingDataset
from .errors import DegenerateDataError

SMALL_GROUP = 5


@dataclass
class CentroidSet:
    biased: np.ndarray
    invariant: np.ndarray | None = None
    valid_mask: np.ndarray | None = None

    def __post_init__(self):
        self.biased = np.asarray(self.biased, dtype=np.float64)
        k = self.biased.shape[0]
        if self.valid_mask is None:
            self.valid_mask = np.zeros(k, dtype=bool)
        self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.invariant is not None:
            self.invariant = np.asarray(self.invariant, dtype=np.float64)

    @property
    def class_count(self):
        return self.biased.shape[0]

    def targets(self):
        """Per-class alignment targets: the invariant estimate where valid, else the biased mean."""
        if self.invariant is None:
            return self.biased.copy()
        return np.where(self.valid_mask[:, None], self.invariant, self.biased)


@dataclass
class GroupAssignment:
    rel_distance: np.ndarray
    soft_assign: np.ndarray
    in_u: np.ndarray
    sample_mask: np.ndarray
    u_counts: np.ndarray
    v_counts: np.ndarray

    @property
    def membership(self):
        return np.where(self.in_u, "U", "V")


def exact_mean(rows):
    """Column means from correctly rounded sums.

    The result does not depend on row order and is unchanged when every row
    is duplicated.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] == 0:
        return np.full(rows.shape[1], np.nan)
    return np.array([math.fsum(col) for col in rows.T.tolist()]) / rows.shape[0]


def class_means(features, labels, class_count):
    """Per-class means; rows of empty classes are NaN."""
    return np.stack([exact_mean(features[labels == k]) for k in range(class_count)])


def compute_centroids(dataset: EmbeddingDataset) -> CentroidSet:
    sizes = dataset.class_sizes()
    empty = np.flatnonzero(sizes == 0)
    if empty.size:
        raise DegenerateDataError(f"class {int(empty[0])} has zero samples")
    return CentroidSet(class_means(dataset.features, dataset.labels, dataset.class_count))


def squared_distances(features, centroids):
    """N x K matrix of squared Euclidean distances."""
    diff = features[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _competitor_distances(features, labels, centroids):
    if centroids.shape[0] < 2:
        raise ValueError("relative distance needs at least two centroids")
    dist = squared_distances(features, centroids)
    rows = np.arange(len(labels))
    own = dist[rows, labels]
    others = dist.copy()
    others[rows, labels] = np.inf
    nearest = others.argmin(axis=1)
    return own, others[rows, nearest], nearest


def relative_distances(features, labels, centroids):
    own, other, _ = _competitor_distances(np.atleast_2d(features), np.asarray(labels), centroids)
    return own - other


def relative_distance(x, y, centroids):
    return float(relative_distances(np.asarray(x, dtype=float)[None, :], [y], centroids)[0])


def assign_groups(dataset: EmbeddingDataset, centroids: CentroidSet) -> GroupAssignment:
    own, other, nearest = _competitor_distances(dataset.features, dataset.labels, centroids.biased)
    rel = own - other
    in_u = rel > 0
    # q equals the own class unless a competitor is strictly closer.
    soft = np.where(in_u, nearest, dataset.labels)
    k = dataset.class_count
    u_counts = np.bincount(dataset.labels[in_u], minlength=k)
    v_counts = np.bincount(dataset.labels[~in_u], minlength=k)
    valid = (u_counts > 0) & (v_counts > 0)
    return GroupAssignment(rel, soft, in_u, valid[dataset.labels], u_counts, v_counts)


def shuffle_assignment(assignment: GroupAssignment, labels, rng) -> GroupAssignment:
    """Random-group control: each sample takes the grouping of a random same-class sample.

    Per-class U/V sizes and the class mask are preserved.
    """
    perm = np.arange(len(labels))
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        perm[idx] = rng.permutation(idx)
    return GroupAssignment(
        assignment.rel_distance[perm],
        np.where(assignment.in_u[perm], assignment.soft_assign[perm], labels),
        assignment.in_u[perm],
        assignment.sample_mask.copy(),
        assignment.u_counts.copy(),
        assignment.v_counts.copy(),
    )


def bias_presence(assignment: GroupAssignment) -> dict:
    classes = []
    for k, (u, v) in enumerate(zip(assignment.u_counts, assignment.v_counts)):
        entry = {
            "class": k,
            "bias_detected": bool(u > 0 and v > 0),
            "u_count": int(u),
            "v_count": int(v),
        }
        if 0 < u < SMALL_GROUP:
            entry["warning"] = f"only {int(u)} deviating samples; invariant estimate is high-variance"
        classes.append(entry)
    report = {"classes": classes, "any_bias": any(c["bias_detected"] for c in classes)}
    if len(classes) > 2:
        report["note"] = "separation guarantees are binary-only; multi-class flags are heuristic"
    return report


def pair_separability(rel_distance, labels, attributes):
    """Fraction of same-class pairs where opposite distance signs coincide with differing attributes.

    Counts are taken from a sign x attribute contingency table per class, so
    this is O(N). Pairs with a zero distance count as "same sign" (product not < 0).
    """
    s = np.sign(rel_distance)
    good = total = 0
    for k in np.unique(labels):
        sel = labels == k
        neg = s[sel] < 0
        pos = s[sel] > 0
        zero = ~(neg | pos)
        attr = attributes[sel]
        cells = {}
        for sname, smask in (("neg", neg), ("pos", pos), ("zero", zero)):
            for aval in np.unique(attr):
                cells[(sname, aval)] = int(np.sum(smask & (attr == aval)))
        keys = list(cells)
        for i, ki in enumerate(keys):
            for kj in keys[i:]:
                ci, cj = cells[ki], cells[kj]
                pairs = ci * (ci - 1) // 2 if ki == kj else ci * cj
                if not pairs:
                    continue
                opposite = {ki[0], kj[0]} == {"neg", "pos"}
                total += pairs
                if opposite == (ki[1] != kj[1]):
                    good += pairs
    return good / total if total else float("nan")
