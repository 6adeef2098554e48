"""Incremental task stream: class reordering, phase splits, batch serving.

Classes are permuted once by a seeded ordering and remapped to contiguous ids
in permutation order, so phase t's classes occupy a contiguous id range and
the classifier head grows by appending rows. Phase class sets are mutually
disjoint and together cover the whole remapped range.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch

from .datasets import NORMALIZATION, ImageDataset


@dataclass(frozen=True)
class ClassOrdering:
    seed: int
    permutation: tuple[int, ...]  # permutation[new_id] = original_id

    @classmethod
    def from_seed(cls, num_classes: int, seed: int) -> "ClassOrdering":
        perm = np.random.RandomState(seed).permutation(num_classes)
        return cls(seed=seed, permutation=tuple(int(c) for c in perm))

    def __post_init__(self):
        if sorted(self.permutation) != list(range(len(self.permutation))):
            raise ValueError("permutation must be a bijection over the class range")

    def remap_array(self) -> np.ndarray:
        """remap[original_id] = new contiguous id."""
        remap = np.empty(len(self.permutation), dtype=np.int64)
        for new_id, original in enumerate(self.permutation):
            remap[original] = new_id
        return remap


@dataclass(frozen=True)
class PhaseManifest:
    phase_index: int
    class_ids: tuple[int, ...]  # remapped ids
    sample_count: int = 0  # 0 until bound to a dataset split
    split: str = "train"

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError("split must be train or test")
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ValueError("duplicate class ids in manifest")


@dataclass(frozen=True)
class AugmentationPolicy:
    horizontal_flip: bool = True
    random_crop: bool = True
    crop_padding: int = 4
    normalize_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    normalize_std: tuple[float, float, float] = (0.25, 0.25, 0.25)
    enhanced: bool = False  # color jitter + cutout, off for the paper's base setting
    cutout_size: int = 8

    @classmethod
    def for_dataset(cls, name: str, enhanced: bool = False) -> "AugmentationPolicy":
        mean, std = NORMALIZATION[name]
        return cls(normalize_mean=mean, normalize_std=std, enhanced=enhanced)

    def test_time(self) -> "AugmentationPolicy":
        return replace(self, horizontal_flip=False, random_crop=False, enhanced=False)


def build_phase_splits(
    num_classes: int, initial_count: int, num_incremental: int, seed: int
) -> list[PhaseManifest]:
    """Split the permuted class range into phase 0 plus T incremental phases."""
    if num_incremental < 1:
        raise ValueError(f"need at least one incremental phase, got T={num_incremental}")
    if not 0 < initial_count < num_classes:
        raise ValueError(
            f"initial_count={initial_count} must leave classes for increments "
            f"(num_classes={num_classes})"
        )
    remaining = num_classes - initial_count
    if remaining % num_incremental:
        raise ValueError(
            f"{remaining} remaining classes do not divide into T={num_incremental} phases"
        )
    per_phase = remaining // num_incremental
    ClassOrdering.from_seed(num_classes, seed)  # validates seedability; ids below are remapped
    manifests = [PhaseManifest(0, tuple(range(initial_count)))]
    for t in range(1, num_incremental + 1):
        start = initial_count + (t - 1) * per_phase
        manifests.append(PhaseManifest(t, tuple(range(start, start + per_phase))))
    return manifests


def write_manifests(path, manifests: list[PhaseManifest]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# phase manifests: index, split, sample count, class ids\n")
        for m in manifests:
            ids = ",".join(str(c) for c in m.class_ids)
            fh.write(f"phase={m.phase_index} split={m.split} count={m.sample_count} classes={ids}\n")


def read_manifests(path) -> list[PhaseManifest]:
    manifests = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = dict(part.split("=", 1) for part in line.split())
            manifests.append(
                PhaseManifest(
                    phase_index=int(fields["phase"]),
                    split=fields["split"],
                    sample_count=int(fields["count"]),
                    class_ids=tuple(int(c) for c in fields["classes"].split(",") if c),
                )
            )
    return manifests


def augment_batch(
    images: torch.Tensor, policy: AugmentationPolicy, generator: torch.Generator | None
) -> torch.Tensor:
    """Apply the policy to a (n, 3, h, w) batch in [0, 1]; returns normalized output.

    generator=None means test-time: normalization only, regardless of flags.
    """
    x = images
    if generator is not None:
        n, _, h, w = x.shape
        if policy.horizontal_flip:
            flip = torch.rand(n, generator=generator) < 0.5
            x = torch.where(flip[:, None, None, None], x.flip(-1), x)
        if policy.random_crop:
            pad = policy.crop_padding
            padded = torch.nn.functional.pad(x, (pad, pad, pad, pad))
            offsets = torch.randint(0, 2 * pad + 1, (n, 2), generator=generator)
            rows = offsets[:, 0, None] + torch.arange(h)
            cols = offsets[:, 1, None] + torch.arange(w)
            x = padded[torch.arange(n)[:, None, None], :, rows[:, :, None], cols[:, None, :]]
            x = x.permute(0, 3, 1, 2)
        if policy.enhanced:
            # brightness/contrast jitter then a single zeroed square per image
            brightness = 1.0 + 0.4 * (torch.rand(n, 1, 1, 1, generator=generator) - 0.5)
            shift = 0.2 * (torch.rand(n, 3, 1, 1, generator=generator) - 0.5)
            x = (x * brightness + shift).clamp(0.0, 1.0)
            size = policy.cutout_size
            ys = torch.randint(0, h - size + 1, (n,), generator=generator)
            xs = torch.randint(0, w - size + 1, (n,), generator=generator)
            x = x.clone()
            for i in range(n):
                x[i, :, ys[i] : ys[i] + size, xs[i] : xs[i] + size] = 0.0
    mean = torch.tensor(policy.normalize_mean).view(1, 3, 1, 1)
    std = torch.tensor(policy.normalize_std).view(1, 3, 1, 1)
    return (x - mean) / std


class TaskStream:
    """Binds a dataset to an ordering and phase splits; serves phase batches."""

    def __init__(self, dataset: ImageDataset, initial_count: int, num_incremental: int, seed: int):
        self.dataset = dataset
        self.ordering = ClassOrdering.from_seed(dataset.num_classes, seed)
        self.splits = build_phase_splits(dataset.num_classes, initial_count, num_incremental, seed)
        remap = self.ordering.remap_array()
        self._train_labels = remap[dataset.train_labels]
        self._test_labels = remap[dataset.test_labels]
        self._train_images = torch.from_numpy(dataset.train_images)
        self._test_images = torch.from_numpy(dataset.test_images)

    @property
    def num_phases(self) -> int:
        return len(self.splits)

    def class_ids(self, phase: int) -> tuple[int, ...]:
        return self.splits[phase].class_ids

    def seen_class_ids(self, phase: int) -> tuple[int, ...]:
        out: list[int] = []
        for t in range(phase + 1):
            out.extend(self.splits[t].class_ids)
        return tuple(out)

    def _split_arrays(self, split: str):
        if split == "train":
            return self._train_images, self._train_labels
        if split == "test":
            return self._test_images, self._test_labels
        raise ValueError("split must be train or test")

    def phase_indices(self, phase: int, split: str) -> np.ndarray:
        images, labels = self._split_arrays(split)
        del images
        mask = np.isin(labels, self.splits[phase].class_ids)
        return np.flatnonzero(mask)

    def manifest(self, phase: int, split: str) -> PhaseManifest:
        base = self.splits[phase]
        return replace(base, sample_count=int(self.phase_indices(phase, split).size), split=split)

    def manifests(self, split: str) -> list[PhaseManifest]:
        return [self.manifest(t, split) for t in range(self.num_phases)]

    def phase_arrays(self, phase: int, split: str) -> tuple[torch.Tensor, np.ndarray]:
        """Raw [0, 1] images and remapped labels for one phase and split."""
        images, labels = self._split_arrays(split)
        idx = self.phase_indices(phase, split)
        return images[idx], labels[idx]

    def iterate_phase(
        self,
        phase: int,
        policy: AugmentationPolicy,
        batch_size: int,
        split: str = "train",
        seed: int = 0,
    ):
        """Yield (augmented image batch, label batch) covering the phase once.

        Train split shuffles and augments; test split is deterministic order,
        normalization only.
        """
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        images, labels = self.phase_arrays(phase, split)
        n = images.shape[0]
        if n == 0:
            raise ValueError(f"phase {phase} has no {split} samples")
        if split == "train":
            generator = torch.Generator().manual_seed(seed)
            order = torch.randperm(n, generator=generator)
        else:
            generator = None
            order = torch.arange(n)
        for start in range(0, n, batch_size):
            take = order[start : start + batch_size]
            batch = augment_batch(images[take], policy, generator)
            yield batch, torch.from_numpy(labels[take.numpy()])
