"""Ground-truth low-dimensional distributions and two-sample statistics.

These provide CPU-friendly oracles for the feature generator: exact samplers
for known distributions, an unbiased Gaussian-kernel MMD estimate, and the
moment-matched Gaussian baseline the generator has to beat.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .store import ClassStats, FeatureSet

KINDS = ("isotropic_gaussian", "anisotropic_gaussian", "banana", "mixture")


@dataclass(frozen=True)
class SyntheticSpec:
    """One labeled synthetic distribution per class.

    params is a per-class list of dicts:
      isotropic_gaussian:   {"mean": [..]}                        unit covariance
      anisotropic_gaussian: {"mean": [..], "std": [..]}           diagonal covariance
      banana:               {"mean": [..], "curvature": c}        (x, y + c*x^2) + mean, 2-d
      mixture:              {"components": [{"mean": [..], "std": [..], "weight": w}, ..]}
    """

    kind: str
    dim: int
    samples_per_class: int
    seed: int
    params: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r} (choose from {KINDS})")
        if self.kind == "banana" and self.dim != 2:
            raise ValueError("banana distribution is 2-d")


def _sample_class(kind: str, dim: int, n: int, params: dict, rng: np.random.Generator) -> np.ndarray:
    if kind == "isotropic_gaussian":
        mean = np.asarray(params.get("mean", np.zeros(dim)), dtype=np.float64)
        return rng.standard_normal((n, dim)) + mean
    if kind == "anisotropic_gaussian":
        mean = np.asarray(params.get("mean", np.zeros(dim)), dtype=np.float64)
        std = np.asarray(params.get("std", np.ones(dim)), dtype=np.float64)
        return rng.standard_normal((n, dim)) * std + mean
    if kind == "banana":
        mean = np.asarray(params.get("mean", np.zeros(2)), dtype=np.float64)
        curvature = float(params.get("curvature", 1.0))
        base = rng.standard_normal((n, 2))
        out = base.copy()
        out[:, 1] += curvature * base[:, 0] ** 2
        return out + mean
    if kind == "mixture":
        components = params["components"]
        weights = np.array([c.get("weight", 1.0) for c in components], dtype=np.float64)
        weights /= weights.sum()
        choice = rng.choice(len(components), size=n, p=weights)
        out = np.empty((n, dim))
        for idx, comp in enumerate(components):
            mask = choice == idx
            mean = np.asarray(comp.get("mean", np.zeros(dim)), dtype=np.float64)
            std = np.asarray(comp.get("std", np.ones(dim)), dtype=np.float64)
            out[mask] = rng.standard_normal((int(mask.sum()), dim)) * std + mean
        return out
    raise ValueError(f"unknown synthetic kind {kind!r}")


def sample_synthetic(spec: SyntheticSpec) -> FeatureSet:
    """Draw the labeled feature set described by the spec, deterministically."""
    rng = np.random.default_rng(spec.seed)
    params = spec.params if spec.params else ({},)
    features, labels = [], []
    for class_id, class_params in enumerate(params):
        features.append(_sample_class(spec.kind, spec.dim, spec.samples_per_class, class_params, rng))
        labels.append(np.full(spec.samples_per_class, class_id, dtype=np.int64))
    return FeatureSet(np.concatenate(features), np.concatenate(labels))


def median_heuristic_bandwidth(a: np.ndarray, b: np.ndarray) -> float:
    """Median pairwise distance of the pooled sample."""
    pooled = np.concatenate([a, b], axis=0)
    sq = cdist(pooled, pooled, "sqeuclidean")
    distances = np.sqrt(sq[np.triu_indices_from(sq, k=1)])
    bandwidth = float(np.median(distances))
    if bandwidth <= 0.0:
        bandwidth = 1.0  # all points identical; any positive bandwidth works
    return bandwidth


def mmd(a: np.ndarray, b: np.ndarray, bandwidth: float | None = None) -> float:
    """Unbiased Gaussian-kernel MMD^2 estimate between two samples.

    k(x, y) = exp(-||x - y||^2 / (2 h^2)) with h the median pairwise distance
    of the pooled sample when bandwidth is unset. The unbiased estimator can
    be slightly negative for same-distribution inputs; callers clamp only at
    report time.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("inputs must be (n, d) sample matrices")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("both sample sets must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    m, n = a.shape[0], b.shape[0]
    if m < 2 or n < 2:
        raise ValueError("unbiased estimate needs at least 2 samples per set")
    if bandwidth is None:
        bandwidth = median_heuristic_bandwidth(a, b)
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    gamma = 1.0 / (2.0 * bandwidth**2)
    kaa = np.exp(-gamma * cdist(a, a, "sqeuclidean"))
    kbb = np.exp(-gamma * cdist(b, b, "sqeuclidean"))
    kab = np.exp(-gamma * cdist(a, b, "sqeuclidean"))
    term_aa = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_bb = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    term_ab = kab.sum() / (m * n)
    return float(term_aa + term_bb - 2.0 * term_ab)


def gaussian_prototype_baseline(
    stats: ClassStats, n: int, rng: np.random.Generator | int | None = None
) -> np.ndarray:
    """n draws from N(m_c, diag(s_c^2)): replay by moments only."""
    rng = np.random.default_rng(rng)
    return rng.standard_normal((n, stats.dim)) * stats.std + stats.mean
