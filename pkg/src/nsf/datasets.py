"""Embedding dataset model and its on-disk formats.

CSV: a header row ``label[,group],f0,f1,...`` followed by one sample per row.

Binary (all little-endian)::

    offset  size      field
    0       4         magic b"NSFE"
    4       4  u32    format version (1)
    8       8  u64    N, sample count
    16      4  u32    D, feature dimension
    20      4  u32    K, class count
    24      4  u32    flags, bit 0 set when group ids are present
    28      4*K i32   original label value of each dense class id
    ...     4*N*D f32 features, row-major
    ...     4*N i32   dense labels
    ...     4*N i32   group ids (only if flag bit 0)
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError

MAGIC = b"NSFE"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIQIII")
FORMATS = ("csv", "binary")


@dataclass(frozen=True, eq=False)
class EmbeddingDataset:
    """N feature vectors with dense class ids and optional group ids.

    ``label_values[k]`` is the original label that dense class ``k`` was
    remapped from at load time. Group ids are opaque and only ever read by
    evaluation code.
    """

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray | None = None
    class_count: int | None = None
    label_values: tuple = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise DatasetError("features must be an N x D matrix")
        if x.shape[0] < 1:
            raise DatasetError("no samples")
        if x.shape[1] < 1:
            raise DatasetError("feature dimension must be >= 1")
        if not np.all(np.isfinite(x)):
            raise DatasetError("features must be finite")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DatasetError(
                f"features row count ({x.shape[0]}) must equal labels length ({y.size})"
            )
        if not np.issubdtype(y.dtype, np.integer):
            raise DatasetError("labels must be integer class ids")
        y = y.astype(np.int64)
        k = int(y.max()) + 1 if self.class_count is None else int(self.class_count)
        if k < 2:
            raise DatasetError("class_count must be >= 2")
        if y.min() < 0 or y.max() >= k:
            raise DatasetError(f"every label must lie in 0..{k - 1}")
        g = self.groups
        if g is not None:
            g = np.asarray(g)
            if g.shape != y.shape:
                raise DatasetError("groups length must equal labels length")
            if not np.issubdtype(g.dtype, np.integer):
                raise DatasetError("group ids must be integers")
            g = g.astype(np.int64)
        values = self.label_values
        values = tuple(range(k)) if values is None else tuple(int(v) for v in values)
        if len(values) != k:
            raise DatasetError("label_values must have one entry per class")
        for name, val in (("features", x), ("labels", y), ("groups", g)):
            if val is not None:
                val = val.copy() if val is getattr(self, name) else val
                val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "class_count", k)
        object.__setattr__(self, "label_values", values)

    @classmethod
    def from_raw_labels(cls, features, raw_labels, groups=None):
        """Remap arbitrary integer labels to dense ids ``0..K-1`` (sorted order)."""
        values, dense = np.unique(np.asarray(raw_labels, dtype=np.int64), return_inverse=True)
        return cls(features, dense, groups, class_count=len(values), label_values=tuple(values))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def raw_labels(self):
        return np.asarray(self.label_values, dtype=np.int64)[self.labels]

    def class_sizes(self):
        return np.bincount(self.labels, minlength=self.class_count)

    def subset(self, index):
        index = np.asarray(index)
        return EmbeddingDataset(
            self.features[index],
            self.labels[index],
            None if self.groups is None else self.groups[index],
            class_count=self.class_count,
            label_values=self.label_values,
        )

    def with_features(self, features):
        return EmbeddingDataset(
            features, self.labels, self.groups, self.class_count, self.label_values
        )

    def __eq__(self, other):
        if not isinstance(other, EmbeddingDataset):
            return NotImplemented
        if (self.groups is None) != (other.groups is None):
            return False
        return (
            self.class_count == other.class_count
            and self.label_values == other.label_values
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and (self.groups is None or np.array_equal(self.groups, other.groups))
        )

    __hash__ = None


def _resolve_format(path, fmt):
    if fmt is None:
        fmt = "csv" if Path(path).suffix.lower() == ".csv" else "binary"
    if fmt not in FORMATS:
        raise DatasetError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    return fmt


def read_dataset(path, format=None) -> EmbeddingDataset:
    fmt = _resolve_format(path, format)
    if fmt == "csv":
        return _read_csv(Path(path))
    return _read_binary(Path(path))


def write_dataset(dataset: EmbeddingDataset, path, format=None):
    fmt = _resolve_format(path, format)
    path = Path(path)
    if fmt == "csv":
        _write_csv(dataset, path)
    else:
        _write_binary(dataset, path)


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise DatasetError("no samples")
        header = [h.strip() for h in header]
        if header[0] != "label":
            raise DatasetError("first CSV column must be 'label'", row=1)
        has_groups = len(header) > 1 and header[1] == "group"
        start = 2 if has_groups else 1
        dim = len(header) - start
        if dim < 1:
            raise DatasetError("CSV header declares no feature columns", row=1)
        labels, groups, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"expected {len(header)} columns, found {len(row)} (dimension mismatch)",
                    row=lineno,
                )
            try:
                labels.append(int(row[0]))
                if has_groups:
                    groups.append(int(row[1]))
                rows.append([float(c) for c in row[start:]])
            except ValueError as exc:
                raise DatasetError(f"malformed value ({exc})", row=lineno) from None
    if not rows:
        raise DatasetError("no samples")
    features = np.asarray(rows, dtype=np.float32).astype(np.float64)
    return EmbeddingDataset.from_raw_labels(features, labels, groups if has_groups else None)


def _write_csv(dataset, path):
    header = ["label"] + (["group"] if dataset.groups is not None else [])
    header += [f"f{j}" for j in range(dataset.dim)]
    cols = [dataset.raw_labels[:, None]]
    fmt = ["%d"]
    if dataset.groups is not None:
        cols.append(dataset.groups[:, None])
        fmt.append("%d")
    # Store as float32; %.9g round-trips any float32 exactly.
    feats = dataset.features.astype(np.float32).astype(np.float64)
    table = np.hstack([c.astype(np.float64) for c in cols] + [feats])
    np.savetxt(path, table, delimiter=",", header=",".join(header), comments="",
               fmt=fmt + ["%.9g"] * dataset.dim)


def _read_binary(path):
    blob = path.read_bytes()
    if len(blob) == 0:
        raise DatasetError("no samples")
    if len(blob) < _HEADER.size:
        raise DatasetError("truncated binary header")
    magic, version, n, d, k, flags = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DatasetError(f"unknown magic bytes {magic!r}")
    if version != BINARY_VERSION:
        raise DatasetError(f"unsupported binary version {version}")
    if n == 0:
        raise DatasetError("no samples")
    has_groups = bool(flags & 1)
    expected = _HEADER.size + 4 * k + 4 * n * d + 4 * n * (2 if has_groups else 1)
    if len(blob) != expected:
        raise DatasetError(f"binary size {len(blob)} does not match header (expected {expected})")
    off = _HEADER.size
    values = np.frombuffer(blob, "<i4", k, off)
    off += 4 * k
    feats = np.frombuffer(blob, "<f4", n * d, off).reshape(n, d)
    off += 4 * n * d
    labels = np.frombuffer(blob, "<i4", n, off)
    off += 4 * n
    groups = np.frombuffer(blob, "<i4", n, off) if has_groups else None
    return EmbeddingDataset(
        feats.astype(np.float64), labels.astype(np.int64),
        None if groups is None else groups.astype(np.int64),
        class_count=k, label_values=tuple(int(v) for v in values),
    )


def _write_binary(dataset, path):
    has_groups = dataset.groups is not None
    parts = [
        _HEADER.pack(MAGIC, BINARY_VERSION, dataset.n, dataset.dim, dataset.class_count,
                     1 if has_groups else 0),
        np.asarray(dataset.label_values, dtype="<i4").tobytes(),
        dataset.features.astype("<f4").tobytes(),
        dataset.labels.astype("<i4").tobytes(),
    ]
    if has_groups:
        parts.append(dataset.groups.astype("<i4").tobytes())
    path.write_bytes(b"".join(parts))


def describe(dataset: EmbeddingDataset):
    """Summary used by the ``inspect`` command."""
    info = {
        "n": dataset.n,
        "dim": dataset.dim,
        "class_count": dataset.class_count,
        "label_values": list(dataset.label_values),
        "class_sizes": dataset.class_sizes().tolist(),
        "has_groups": dataset.groups is not None,
    }
    if dataset.groups is not None:
        ids, counts = np.unique(dataset.groups, return_counts=True)
        info["group_sizes"] = {int(g): int(c) for g, c in zip(ids, counts)}
    return info
