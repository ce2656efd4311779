"""Bias-sampled synthetic data: x = [B*a, y, noise].

Labels y are fair draws from {+1, -1}; the spurious attribute a agrees with y
with probability rho. Randomness comes from numpy's Philox4x64-10
counter-based bit generator keyed by the config seed, so identical configs
give bit-identical data within this implementation.

Dense class ids follow the sorted raw labels: -1 -> 0, +1 -> 1. Group ids
encode (a, y) as ``2 * class_id + (a == +1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import EmbeddingDataset
from .errors import ConfigError

SPURIOUS_CHANNEL = 0
CORE_CHANNEL = 1
GROUP_IDS = (0, 1, 2, 3)


def make_rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(seed, stream):
    """Independent child seed for a named integer stream (e.g. held-out data)."""
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 4000
    dim: int = 12
    rho: float = 0.9
    bias_scale: float = 3.0
    seed: int = 0

    def __post_init__(self):
        problems = self.check(self.n, self.dim, self.rho, self.bias_scale, self.seed)
        if problems:
            field, msg = problems[0]
            raise ConfigError(field, msg)

    @staticmethod
    def check(n, dim, rho, bias_scale, seed=0):
        """All violated constraints as ``(field, message)`` pairs."""
        out = []
        if int(n) != n or n < 1:
            out.append(("n", "n must be a positive integer"))
        if int(dim) != dim or dim < 3:
            out.append(("dim", "dim must be an integer >= 3"))
        if not 0.5 < rho < 1:
            out.append(("rho", "rho must be in (0.5, 1)"))
        if not bias_scale >= 1:
            out.append(("bias_scale", "bias_scale must be >= 1"))
        if int(seed) != seed or not 0 <= seed < 2**64:
            out.append(("seed", "seed must be an integer in [0, 2**64)"))
        return out


def generate(config: SyntheticConfig) -> EmbeddingDataset:
    rng = make_rng(config.seed)
    n, dim = config.n, config.dim
    y = rng.integers(0, 2, size=n) * 2 - 1
    agree = rng.random(n) < config.rho
    a = np.where(agree, y, -y)
    noise = rng.standard_normal((n, dim - 2))
    features = np.empty((n, dim))
    features[:, SPURIOUS_CHANNEL] = config.bias_scale * a
    features[:, CORE_CHANNEL] = y
    features[:, 2:] = noise
    class_id = (y + 1) // 2
    groups = 2 * class_id + (a > 0)
    return EmbeddingDataset(features, class_id, groups, class_count=2, label_values=(-1, 1))


def attributes(dataset: EmbeddingDataset) -> np.ndarray:
    """Ground-truth spurious attribute a in {+1, -1}, decoded from group ids."""
    if dataset.groups is None:
        raise ValueError("dataset carries no group ids")
    return np.where(dataset.groups % 2 == 1, 1, -1)


def signed_labels(dataset: EmbeddingDataset) -> np.ndarray:
    return dataset.raw_labels


def conditional_mean(rho, bias_scale, dim, label):
    """E[x | y=label] = [(2 rho - 1) B label, label, 0, ...]; rho may be any value in [0, 1]."""
    mean = np.zeros(dim)
    mean[SPURIOUS_CHANNEL] = (2 * rho - 1) * bias_scale * label
    mean[CORE_CHANNEL] = label
    return mean


def strong_spurious_margin(rho, bias_scale):
    """1 - (2 rho - 1)^2 B^4. Negative means the attribute can be separated by distance sign."""
    return 1.0 - (2.0 * rho - 1.0) ** 2 * bias_scale**4
