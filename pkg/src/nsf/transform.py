"""Channel-wise affine transform t(x) = w * (x - b) + b and its alignment training.

Training minimises

    lam * |w|_2 + (1/N) sum_i o_i * dist(t(x_i), target[y_i])

over (w, b) with full-batch Adam, where ``o_i`` masks out classes without a
usable invariant centroid and ``dist`` is either the squared Euclidean
residual (``squared``) or its square root (``l2norm``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import EmbeddingDataset
from .errors import ConfigError, TrainingDiverged
from .grouping import CentroidSet, GroupAssignment
from .optim import AdamW
from .synthgen import make_rng

log = logging.getLogger(__name__)

LOSS_FORMS = ("squared", "l2norm")
STATUS_OK = "ok"
STATUS_SKIPPED = "bias not detected, transform skipped"


@dataclass
class AffineTransform:
    scale: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=np.float64).copy()
        self.offset = np.asarray(self.offset, dtype=np.float64).copy()
        if self.scale.shape != self.offset.shape or self.scale.ndim != 1:
            raise ValueError("scale and offset must be vectors of equal length")

    @classmethod
    def identity(cls, dim):
        return cls(np.ones(dim), np.zeros(dim))

    @property
    def dim(self):
        return self.scale.size

    def is_identity(self):
        return bool(np.all(self.scale == 1.0))

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} channels, got {x.shape[-1]}")
        return self.scale * (x - self.offset) + self.offset

    __call__ = apply


def apply(transform: AffineTransform, x):
    return transform.apply(x)


@dataclass(frozen=True)
class TransformTrainConfig:
    lam: float = 1e-4
    learning_rate: float = 1e-3
    steps: int = 2000
    loss_form: str = "squared"
    seed: int = 0
    eps: float = 1e-12

    def __post_init__(self):
        problems = self.check(self.lam, self.learning_rate, self.steps, self.loss_form)
        if problems:
            raise ConfigError(*problems[0])

    @staticmethod
    def check(lam, learning_rate, steps, loss_form, seed=0, eps=1e-12):
        out = []
        if not lam >= 0:
            out.append(("lam", "lambda must be >= 0"))
        if not learning_rate > 0:
            out.append(("learning_rate", "learning_rate must be > 0"))
        if int(steps) != steps or steps < 1:
            out.append(("steps", "steps must be an integer >= 1"))
        if loss_form not in LOSS_FORMS:
            out.append(("loss_form", f"loss_form must be one of {LOSS_FORMS}"))
        return out


@dataclass
class TransformFit:
    transform: AffineTransform
    losses: np.ndarray
    status: str = STATUS_OK
    initial_loss: float = math.nan
    final_loss: float = math.nan
    best_step: int = 0
    optimizer: dict = field(default_factory=dict)


def alignment_loss(scale, offset, features, targets, mask, lam, loss_form="squared", eps=1e-12,
                   n=None):
    """Loss value and its gradients with respect to scale and offset.

    ``n`` is the normalising sample count; it defaults to the number of rows.
    """
    n = features.shape[0] if n is None else n
    centered = features - offset
    resid = scale * centered + offset - targets
    sq = np.einsum("ij,ij->i", resid, resid)
    weight = mask.astype(np.float64) / n
    if loss_form == "squared":
        per_sample = sq
        dresid = 2.0 * resid
    elif loss_form == "l2norm":
        per_sample = np.sqrt(sq + eps)
        dresid = resid / per_sample[:, None]
    else:
        raise ValueError(f"unknown loss_form {loss_form!r}")
    dresid *= weight[:, None]
    norm = float(np.linalg.norm(scale))
    loss = lam * norm + float(weight @ per_sample)
    grad_w = np.einsum("ij,ij->j", dresid, centered)
    if norm > 0:
        grad_w += lam * scale / norm
    grad_b = (1.0 - scale) * dresid.sum(axis=0)
    return loss, grad_w, grad_b


def train_transform(
    dataset: EmbeddingDataset,
    assignment: GroupAssignment,
    centroids: CentroidSet,
    config: TransformTrainConfig = TransformTrainConfig(),
) -> TransformFit:
    dim = dataset.dim
    mask = np.asarray(assignment.sample_mask, dtype=bool)
    if centroids.invariant is None or not centroids.valid_mask.any() or not mask.any():
        log.warning(STATUS_SKIPPED)
        return TransformFit(AffineTransform.identity(dim), np.zeros(0), STATUS_SKIPPED)

    # Masked rows carry zero weight; dropping them leaves loss and gradients unchanged.
    n = dataset.n
    x = dataset.features[mask]
    targets = centroids.targets()[dataset.labels[mask]]
    keep = np.ones(len(x), dtype=bool)
    scale, offset = np.ones(dim), np.zeros(dim)
    opt = AdamW([scale, offset], lr=config.learning_rate, weight_decay=0.0)

    def evaluate():
        with np.errstate(over="ignore", invalid="ignore"):
            return alignment_loss(scale, offset, x, targets, keep, config.lam, config.loss_form,
                                  config.eps, n=n)

    losses = np.empty(config.steps + 1)
    best = (math.inf, 0, scale.copy(), offset.copy())
    for step in range(config.steps + 1):
        loss, gw, gb = evaluate()
        if not math.isfinite(loss):
            raise TrainingDiverged(
                f"alignment loss became {loss} at step {step} "
                f"(lr={config.learning_rate}, |w|={np.linalg.norm(scale):.3g})"
            )
        losses[step] = loss
        if loss < best[0]:
            best = (loss, step, scale.copy(), offset.copy())
        if step < config.steps:
            opt.step([gw, gb])
    # Return the lowest-loss iterate; Adam's last step can overshoot a flat optimum.
    _, best_step, w, b = best
    return TransformFit(
        AffineTransform(w, b), losses, STATUS_OK,
        initial_loss=float(losses[0]), final_loss=float(losses[best_step]),
        best_step=best_step, optimizer=opt.hyperparameters(),
    )


def discard_count(fraction, dim):
    return min(dim, int(math.floor(fraction * dim + 0.5)))


def discard_channels(transform: AffineTransform, fraction, strategy="lowest_w", seed=0):
    """Zero the scale of a fraction of channels, chosen by lowest |w| or at random."""
    if not 0 <= fraction < 1:
        raise ValueError("fraction must be in [0, 1)")
    count = discard_count(fraction, transform.dim)
    scale = transform.scale.copy()
    if count:
        if strategy == "lowest_w":
            chosen = np.argsort(np.abs(scale), kind="stable")[:count]
        elif strategy == "random":
            chosen = make_rng(seed).choice(transform.dim, size=count, replace=False)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        scale[chosen] = 0.0
    return AffineTransform(scale, transform.offset)
