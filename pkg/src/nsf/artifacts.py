"""Persisted pipeline artifacts: transform, heads, centroids and run metadata.

A bundle is an uncompressed ``.npz`` archive of float64 arrays plus a
``metadata`` entry holding UTF-8 JSON. Absent components have no keys at
all, so they load back as ``None`` rather than as zeros.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .classifier import LinearClassifier
from .errors import BundleCorruptError, BundleVersionError
from .grouping import CentroidSet
from .transform import AffineTransform

FORMAT_VERSION = "nsf-bundle/1"
HEADS = ("erm", "debiased")


@dataclass
class ArtifactBundle:
    transform: AffineTransform | None = None
    erm: LinearClassifier | None = None
    debiased: LinearClassifier | None = None
    centroids: CentroidSet | None = None
    metadata: dict = field(default_factory=dict)

    def head(self, name):
        if name not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        return getattr(self, name)


def _arrays(bundle):
    out = {}
    if bundle.transform is not None:
        out["transform.scale"] = bundle.transform.scale
        out["transform.offset"] = bundle.transform.offset
    for name in HEADS:
        clf = bundle.head(name)
        if clf is not None:
            out[f"{name}.weights"] = clf.weights
            out[f"{name}.bias"] = clf.bias
    c = bundle.centroids
    if c is not None:
        out["centroids.biased"] = c.biased
        out["centroids.valid_mask"] = c.valid_mask
        if c.invariant is not None:
            out["centroids.invariant"] = c.invariant
    return out


def save_bundle(bundle: ArtifactBundle, path):
    meta = dict(bundle.metadata)
    meta["format_version"] = FORMAT_VERSION
    meta.setdefault("created", datetime.now(timezone.utc).isoformat())
    arrays = {k: np.asarray(v) for k, v in _arrays(bundle).items()}
    arrays["metadata"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_bundle(path) -> ArtifactBundle:
    try:
        with np.load(Path(path), allow_pickle=False) as npz:
            data = {k: npz[k] for k in npz.files}
    except (zipfile.BadZipFile, EOFError, ValueError, OSError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise BundleCorruptError(f"cannot read bundle {path}: {exc}") from exc
    if "metadata" not in data:
        raise BundleCorruptError(f"bundle {path} has no metadata record")
    try:
        meta = json.loads(data.pop("metadata").tobytes().decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleCorruptError(f"bundle {path}: metadata is not valid JSON") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleVersionError(
            f"bundle format {version!r} is incompatible with this reader ({FORMAT_VERSION})"
        )

    def pair(prefix, a, b):
        ka, kb = f"{prefix}.{a}", f"{prefix}.{b}"
        if (ka in data) != (kb in data):
            raise BundleCorruptError(f"bundle {path}: {prefix} is incomplete")
        return (data[ka], data[kb]) if ka in data else None

    t = pair("transform", "scale", "offset")
    heads = {name: pair(name, "weights", "bias") for name in HEADS}
    c = pair("centroids", "biased", "valid_mask")
    return ArtifactBundle(
        transform=None if t is None else AffineTransform(*t),
        erm=None if heads["erm"] is None else LinearClassifier(*heads["erm"]),
        debiased=None if heads["debiased"] is None else LinearClassifier(*heads["debiased"]),
        centroids=None if c is None else CentroidSet(c[0], data.get("centroids.invariant"), c[1]),
        metadata=meta,
    )
