"""Debiasing frozen embeddings by neutralizing spurious channels.

Typical use::

    from nsf import SyntheticConfig, generate, fit_nsf, ablation_grid
    train = generate(SyntheticConfig(seed=0))
    model = fit_nsf(train)
"""

from .artifacts import ArtifactBundle, load_bundle, save_bundle
from .classifier import (
    ClassifierTrainConfig,
    LinearClassifier,
    SamplerState,
    build_sampler,
    predict,
    train_debiased_head,
    train_erm_head,
)
from .config import RunConfig, load_config, validate_config
from .datasets import EmbeddingDataset, read_dataset, write_dataset
from .evaluate import EvalReport, ablation_grid, channel_discard_sweep, evaluate
from .grouping import (
    CentroidSet,
    GroupAssignment,
    assign_groups,
    bias_presence,
    compute_centroids,
    relative_distance,
)
from .neutralize import estimate_invariant
from .pipeline import fit_nsf, run_pipeline
from .synthgen import SyntheticConfig, generate, strong_spurious_margin
from .transform import AffineTransform, TransformTrainConfig, discard_channels, train_transform

__all__ = [
    "AffineTransform", "ArtifactBundle", "CentroidSet", "ClassifierTrainConfig",
    "EmbeddingDataset", "EvalReport", "GroupAssignment", "LinearClassifier", "RunConfig",
    "SamplerState", "SyntheticConfig", "TransformTrainConfig", "ablation_grid",
    "assign_groups", "bias_presence", "build_sampler", "channel_discard_sweep",
    "compute_centroids", "discard_channels", "estimate_invariant", "evaluate", "fit_nsf",
    "generate", "load_bundle", "load_config", "predict", "read_dataset", "relative_distance",
    "run_pipeline", "save_bundle", "strong_spurious_margin", "train_debiased_head",
    "train_erm_head", "train_transform", "validate_config", "write_dataset",
]
__version__ = "0.1.0"
