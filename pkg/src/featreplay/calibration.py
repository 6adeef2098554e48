"""Prototype calibration: factor class feature clouds into moments + shape.

Each class keeps a mean vector and a per-dimension standard deviation
(population convention, floored at STD_FLOOR). Normalizing by class maps the
class cloud to zero mean and unit variance so a generator only has to learn
the cloud's shape; denormalizing restores the stored moments.
"""

from __future__ import annotations

import warnings

import numpy as np

from .store import ClassStats, FeatureSet

STD_FLOOR = 1e-5


class DegenerateClassError(ValueError):
    """Raised when a class has too few samples to calibrate."""


def compute_stats(features: np.ndarray, class_id: int) -> ClassStats:
    """Population mean/std of one class's feature matrix, std floored.

    Dimensions with (near-)zero variance are floored at STD_FLOOR and a
    warning is emitted; frozen-extractor features can have dead dimensions.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("features must be (n, d)")
    if features.shape[0] < 2:
        raise DegenerateClassError(
            f"class {class_id} has {features.shape[0]} sample(s); need at least 2"
        )
    mean = features.mean(axis=0)
    std = features.std(axis=0)  # population (ddof=0)
    floored = std < STD_FLOOR
    if np.any(floored):
        warnings.warn(
            f"class {class_id}: {int(floored.sum())} dimension(s) with std < "
            f"{STD_FLOOR:g}, floored",
            stacklevel=2,
        )
        std = np.maximum(std, STD_FLOOR)
    return ClassStats(class_id=int(class_id), mean=mean, std=std, count=features.shape[0])


def _check_label(stats: ClassStats, label: int | None) -> None:
    if label is not None and int(label) != stats.class_id:
        raise ValueError(f"label {label} does not match stats for class {stats.class_id}")


def normalize_by_class(features: np.ndarray, stats: ClassStats, label: int | None = None) -> np.ndarray:
    """(f - m_c) / s_c elementwise."""
    _check_label(stats, label)
    return (np.asarray(features, dtype=np.float64) - stats.mean) / stats.std


def denormalize_by_class(features: np.ndarray, stats: ClassStats, label: int | None = None) -> np.ndarray:
    """f * s_c + m_c elementwise."""
    _check_label(stats, label)
    return np.asarray(features, dtype=np.float64) * stats.std + stats.mean


def compute_stats_per_class(feature_set: FeatureSet) -> dict[int, ClassStats]:
    return {c: compute_stats(feature_set.for_class(c), c) for c in feature_set.class_ids()}


def normalize_set(feature_set: FeatureSet, stats: dict[int, ClassStats]) -> FeatureSet:
    """Normalize every record by its own class's stats."""
    out = np.empty_like(feature_set.features, dtype=np.float64)
    for c in feature_set.class_ids():
        mask = feature_set.labels == c
        out[mask] = normalize_by_class(feature_set.features[mask], stats[c], label=c)
    return FeatureSet(out, feature_set.labels.copy(), phase=feature_set.phase)
