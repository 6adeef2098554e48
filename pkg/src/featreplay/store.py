"""In-memory feature sets and the binary cache/stats file formats.

Feature cache layout (little-endian):
    magic  b"FEC1"
    uint32 feature dimension d
    uint32 record count n
    n records of (int32 label, d float32 values)

Class-stats layout (little-endian):
    magic  b"FST1"
    uint32 format version (currently 1)
    uint32 feature dimension d
    uint32 class count
    per class: (int32 class id, uint32 sample count, d float32 means, d float32 stds)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"FEC1"
STATS_MAGIC = b"FST1"
STATS_VERSION = 1


@dataclass(frozen=True)
class FeatureSet:
    """A batch of d-dimensional feature vectors with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    phase: int | None = None

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be (n, d)")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be (n,)")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_ids(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels))

    def for_class(self, class_id: int) -> np.ndarray:
        return self.features[self.labels == class_id]

    @staticmethod
    def concat(sets: list["FeatureSet"]) -> "FeatureSet":
        if not sets:
            raise ValueError("nothing to concatenate")
        return FeatureSet(
            np.concatenate([s.features for s in sets], axis=0),
            np.concatenate([s.labels for s in sets], axis=0),
        )


def write_feature_cache(path: str | Path, feature_set: FeatureSet) -> None:
    features = np.ascontiguousarray(feature_set.features, dtype="<f4")
    labels = np.ascontiguousarray(feature_set.labels, dtype="<i4")
    n, d = features.shape
    records = np.zeros(n, dtype=[("label", "<i4"), ("values", "<f4", (d,))])
    records["label"] = labels
    records["values"] = features
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", d, n))
        fh.write(records.tobytes())


def read_feature_cache(path: str | Path) -> FeatureSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise IOError(f"{path}: not a feature cache (magic {magic!r})")
        d, n = struct.unpack("<II", fh.read(8))
        records = np.frombuffer(fh.read(), dtype=[("label", "<i4"), ("values", "<f4", (d,))])
    if records.shape[0] != n:
        raise IOError(f"{path}: expected {n} records, found {records.shape[0]}")
    return FeatureSet(
        records["values"].astype(np.float64),
        records["label"].astype(np.int64),
    )


@dataclass(frozen=True)
class ClassStats:
    """Per-class, per-dimension mean and (floored) standard deviation."""

    class_id: int
    mean: np.ndarray
    std: np.ndarray
    count: int

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be matching 1-d vectors")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def write_class_stats(path: str | Path, stats: list[ClassStats]) -> None:
    if not stats:
        raise ValueError("no stats to write")
    d = stats[0].dim
    with open(path, "wb") as fh:
        fh.write(STATS_MAGIC)
        fh.write(struct.pack("<III", STATS_VERSION, d, len(stats)))
        for s in stats:
            if s.dim != d:
                raise ValueError("inconsistent stat dimensions")
            fh.write(struct.pack("<iI", s.class_id, s.count))
            fh.write(np.ascontiguousarray(s.mean, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(s.std, dtype="<f4").tobytes())


def read_class_stats(path: str | Path) -> dict[int, ClassStats]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != STATS_MAGIC:
            raise IOError(f"{path}: not a stats file (magic {magic!r})")
        version, d, n_classes = struct.unpack("<III", fh.read(12))
        if version != STATS_VERSION:
            raise IOError(f"{path}: unsupported stats version {version}")
        out: dict[int, ClassStats] = {}
        for _ in range(n_classes):
            class_id, count = struct.unpack("<iI", fh.read(8))
            mean = np.frombuffer(fh.read(4 * d), dtype="<f4").astype(np.float64)
            std = np.frombuffer(fh.read(4 * d), dtype="<f4").astype(np.float64)
            out[class_id] = ClassStats(class_id, mean, std, count)
    return out
