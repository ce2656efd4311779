"""Linear softmax heads: the ERM baseline and the minority-balanced debiased head."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .datasets import EmbeddingDataset
from .errors import ConfigError, DegenerateDataError, TrainingDiverged
from .grouping import CentroidSet, GroupAssignment, class_means, relative_distances
from .optim import AdamW
from .synthgen import make_rng
from .transform import AffineTransform

log = logging.getLogger(__name__)

SAMPLER_REFERENCES = ("invariant", "transformed")


@dataclass
class LinearClassifier:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)

    @property
    def class_count(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    def logits(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {x.shape[1]}")
        return x @ self.weights.T + self.bias

    def predict_proba(self, x):
        return softmax(self.logits(x))

    def predict(self, x):
        return self.logits(x).argmax(axis=1)


@dataclass(frozen=True)
class ClassifierTrainConfig:
    learning_rate: float = 1e-3
    steps: int = 1000
    batch_size: int = 128
    weight_decay: float = 0.0
    init_scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        problems = self.check(self.learning_rate, self.steps, self.batch_size, self.weight_decay)
        if problems:
            raise ConfigError(*problems[0])

    @staticmethod
    def check(learning_rate, steps, batch_size, weight_decay=0.0, init_scale=0.01, seed=0):
        out = []
        if not learning_rate > 0:
            out.append(("learning_rate", "learning_rate must be > 0"))
        if int(steps) != steps or steps < 1:
            out.append(("steps", "steps must be an integer >= 1"))
        if int(batch_size) != batch_size or batch_size < 0:
            out.append(("batch_size", "batch_size must be an integer >= 0 (0 = full batch)"))
        if not weight_decay >= 0:
            out.append(("weight_decay", "weight_decay must be >= 0"))
        return out


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(weights, bias, x, y):
    """Mean softmax cross-entropy and its gradients for a linear head."""
    z = x @ weights.T + bias
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(y))
    loss = float(np.mean(logsum - z[rows, y]))
    g = np.exp(z - logsum[:, None])
    g[rows, y] -= 1.0
    g /= len(y)
    return loss, g.T @ x, g.sum(axis=0)


def paired_cross_entropy(weights, bias, x, y, first, second):
    """Sum of the mean CE over the ``first`` batch and over the ``second`` batch.

    An empty index batch contributes nothing.
    """
    loss = 0.0
    gw = np.zeros_like(weights)
    gb = np.zeros_like(bias)
    for idx in (first, second):
        if len(idx) == 0:
            continue
        l_, w_, b_ = cross_entropy(weights, bias, x[idx], y[idx])
        loss += l_
        gw += w_
        gb += b_
    return loss, gw, gb


def init_classifier(class_count, dim, config):
    rng = make_rng(config.seed)
    return LinearClassifier(rng.normal(0.0, config.init_scale, (class_count, dim)), np.zeros(class_count))


def _check(loss, step, config):
    if not math.isfinite(loss):
        raise TrainingDiverged(
            f"cross-entropy became {loss} at step {step}; "
            f"try a learning rate below {config.learning_rate}"
        )


def train_erm_head(dataset: EmbeddingDataset, config: ClassifierTrainConfig = ClassifierTrainConfig()):
    """Average-loss head on raw features (mini-batches drawn with replacement)."""
    clf = init_classifier(dataset.class_count, dataset.dim, config)
    opt = AdamW([clf.weights, clf.bias], lr=config.learning_rate, weight_decay=config.weight_decay)
    rng = make_rng(config.seed + 1)
    x, y = dataset.features, dataset.labels
    full = config.batch_size == 0 or config.batch_size >= dataset.n
    for step in range(config.steps):
        if full:
            xb, yb = x, y
        else:
            idx = rng.integers(0, dataset.n, config.batch_size)
            xb, yb = x[idx], y[idx]
        loss, gw, gb = cross_entropy(clf.weights, clf.bias, xb, yb)
        _check(loss, step, config)
        opt.step([gw, gb])
    return clf


@dataclass
class SamplerState:
    m1_indices: np.ndarray
    m2_indices: np.ndarray
    batch_size: int = 128
    seed: int = 0
    fell_back: bool = False

    def draw(self, rng):
        """One batch per non-empty pool, each of ``batch_size`` indices drawn with replacement."""
        out = []
        for pool in (self.m1_indices, self.m2_indices):
            if pool.size:
                out.append(pool[rng.integers(0, pool.size, self.batch_size)])
            else:
                out.append(pool)
        return out[0], out[1]

    def summary(self):
        return {
            "m1_size": int(self.m1_indices.size),
            "m2_size": int(self.m2_indices.size),
            "batch_size": self.batch_size,
            "seed": self.seed,
            "fell_back_to_u": self.fell_back,
        }


def build_sampler(
    dataset: EmbeddingDataset,
    transform: AffineTransform,
    centroids: CentroidSet,
    assignment: GroupAssignment,
    batch_size=128,
    seed=0,
    reference="invariant",
) -> SamplerState:
    """Minority pool M1 and majority pool M2.

    M1: deviating samples of valid classes whose transformed feature is
    closest to its own class under the reference centroids. M2: samples
    strictly closer to their own biased centroid. ``reference`` selects the
    estimated invariant centroids or the class means of transformed features.
    """
    if reference not in SAMPLER_REFERENCES:
        raise ValueError(f"reference must be one of {SAMPLER_REFERENCES}")
    d = assignment.rel_distance
    eligible = (d > 0) & assignment.sample_mask
    tx = transform.apply(dataset.features)
    if reference == "invariant":
        ref = centroids.targets()
    else:
        ref = class_means(tx, dataset.labels, dataset.class_count)
    d_t = relative_distances(tx, dataset.labels, ref)
    m1 = np.flatnonzero(eligible & (d_t < 0))
    m2 = np.flatnonzero(d < 0)
    fell_back = False
    if m1.size == 0 and eligible.any():
        log.warning("minority pool empty after transform filter; using all deviating samples")
        m1 = np.flatnonzero(eligible)
        fell_back = True
    if m1.size == 0 and m2.size == 0:
        raise DegenerateDataError("both sampling pools are empty")
    return SamplerState(m1, m2, batch_size, seed, fell_back)


def train_debiased_head(
    dataset: EmbeddingDataset,
    transform: AffineTransform,
    sampler: SamplerState,
    config: ClassifierTrainConfig = ClassifierTrainConfig(),
):
    """Fresh head on transformed features; each step sums the CE of one M1 batch and one M2 batch."""
    x = transform.apply(dataset.features)
    y = dataset.labels
    clf = init_classifier(dataset.class_count, dataset.dim, config)
    opt = AdamW([clf.weights, clf.bias], lr=config.learning_rate, weight_decay=config.weight_decay)
    rng = make_rng(sampler.seed)
    if sampler.m1_indices.size == 0 or sampler.m2_indices.size == 0:
        log.warning("one sampling pool is empty; training on the other pool only")
    for step in range(config.steps):
        first, second = sampler.draw(rng)
        loss, gw, gb = paired_cross_entropy(clf.weights, clf.bias, x, y, first, second)
        _check(loss, step, config)
        opt.step([gw, gb])
    return clf


def predict(classifier: LinearClassifier, features, transform: AffineTransform | None = None):
    x = np.asarray(features, dtype=np.float64)
    if transform is not None:
        x = transform.apply(x)
    return classifier.predict(x)
