import logging

import numpy as np

from .datasets import EmbeddingDataset
from .errors import NoBiasDetected
from .grouping import SMALL_GROUP, CentroidSet, GroupAssignment, compute_centroids, exact_mean

log = logging.getLogger(__name__)


def estimate_invariant(
    dataset: EmbeddingDataset,
    assignment: GroupAssignment,
    centroids: CentroidSet | None = None,
) -> CentroidSet:
    """Equal-weight average of the deviating and conforming means of each class.

    Classes lacking either subset are marked invalid; their ``invariant`` row
    is NaN and ``CentroidSet.targets`` falls back to the biased mean.
    Raises NoBiasDetected if no class is valid.
    """
    if centroids is None:
        centroids = compute_centroids(dataset)
    k, dim = dataset.class_count, dataset.dim
    invariant = np.full((k, dim), np.nan)
    valid = (assignment.u_counts > 0) & (assignment.v_counts > 0)
    for c in np.flatnonzero(valid):
        own = dataset.labels == c
        u = dataset.features[own & assignment.in_u]
        v = dataset.features[own & ~assignment.in_u]
        invariant[c] = 0.5 * exact_mean(u) + 0.5 * exact_mean(v)
        if len(u) < SMALL_GROUP:
            log.warning("class %d: invariant centroid from only %d deviating samples", c, len(u))
    result = CentroidSet(centroids.biased.copy(), invariant, valid)
    if not valid.any():
        raise NoBiasDetected(
            "no bias detected: no class has both deviating and conforming samples; "
            "the transform step degenerates to the identity"
        )
    return result
