"""Image dataset ingestion.

Provides CIFAR-10/100 via torchvision plus a self-contained procedural
"shapes" dataset for fully offline benchmark runs. Every dataset is decoded
once into float tensors in [0, 1]; phase iteration never touches disk again.

The shapes dataset renders 10 classes of colored geometric figures on noisy
backgrounds. Each class mixes two visual modes (different hue, size regime and
position regime), so class-conditional feature distributions are deliberately
multi-modal: a single Gaussian per class underfits them, which is exactly the
regime feature replay is supposed to handle.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

DATASETS = ("shapes", "cifar10", "cifar100")

# 12 saturated hues; class/mode pairs index into this table
_HUE_TABLE = np.asarray(
    [colorsys.hsv_to_rgb(h / 12.0, 1.0, 1.0) for h in range(12)], dtype=np.float64
)

_SHAPE_NAMES = ("circle", "square", "triangle", "plus", "ring")

NORMALIZATION = {
    "shapes": ((0.5, 0.5, 0.5), (0.25, 0.25, 0.25)),
    "cifar10": ((0.4914, 0.4822, 0.4465), (0.2470, 0.2435, 0.2616)),
    "cifar100": ((0.5071, 0.4865, 0.4409), (0.2673, 0.2564, 0.2762)),
}


@dataclass(frozen=True)
class ImageDataset:
    name: str
    train_images: np.ndarray  # (n, 3, h, w) float32 in [0, 1]
    train_labels: np.ndarray  # (n,) int64, original label space
    test_images: np.ndarray
    test_labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        for images, labels in (
            (self.train_images, self.train_labels),
            (self.test_images, self.test_labels),
        ):
            if images.ndim != 4 or images.shape[1] != 3:
                raise ValueError("images must be (n, 3, h, w)")
            if images.shape[0] != labels.shape[0]:
                raise ValueError("image/label count mismatch")


def _shape_mask(shape: str, xx: np.ndarray, yy: np.ndarray, cx: float, cy: float, r: float) -> np.ndarray:
    dx, dy = xx - cx, yy - cy
    if shape == "circle":
        return dx**2 + dy**2 < r**2
    if shape == "square":
        return (np.abs(dx) < r) & (np.abs(dy) < r)
    if shape == "triangle":
        return (dy > -r) & (dy < r) & (np.abs(dx) < (dy + r) / 2.0)
    if shape == "plus":
        arm = r / 3.0
        return ((np.abs(dx) < arm) & (np.abs(dy) < r)) | ((np.abs(dy) < arm) & (np.abs(dx) < r))
    if shape == "ring":
        d2 = dx**2 + dy**2
        return ((r / 2.0) ** 2 < d2) & (d2 < r**2)
    raise ValueError(f"unknown shape {shape!r}")


def _render_sample(class_id: int, mode: int, size: int, rng: np.random.Generator) -> np.ndarray:
    shape = _SHAPE_NAMES[class_id % len(_SHAPE_NAMES)]
    hue = _HUE_TABLE[(2 * class_id + mode) % len(_HUE_TABLE)]
    if mode == 0:
        center = rng.uniform(size * 0.28, size * 0.44, size=2)
        radius = rng.uniform(size * 0.12, size * 0.19)
        background = 0.10
    else:
        center = rng.uniform(size * 0.55, size * 0.72, size=2)
        radius = rng.uniform(size * 0.22, size * 0.31)
        background = 0.28
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    mask = _shape_mask(shape, xx, yy, center[0], center[1], radius)
    color = np.clip(hue + rng.uniform(-0.10, 0.10, size=3), 0.0, 1.0)
    image = np.full((3, size, size), background)
    image += rng.normal(0.0, 0.05, size=image.shape)
    image[:, mask] = color[:, None]
    image[:, mask] += rng.normal(0.0, 0.03, size=(3, int(mask.sum())))
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def _render_split(per_class: int, num_classes: int, size: int, rng: np.random.Generator):
    images = np.empty((num_classes * per_class, 3, size, size), dtype=np.float32)
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    row = 0
    for class_id in range(num_classes):
        for _ in range(per_class):
            mode = int(rng.integers(0, 2))
            images[row] = _render_sample(class_id, mode, size, rng)
            labels[row] = class_id
            row += 1
    return images, labels


def make_shapes_dataset(
    per_class_train: int = 150,
    per_class_test: int = 60,
    image_size: int = 32,
    num_classes: int = 10,
    seed: int = 0,
) -> ImageDataset:
    if num_classes > 10:
        raise ValueError("shapes dataset defines at most 10 classes")
    train = _render_split(per_class_train, num_classes, image_size, np.random.default_rng(seed))
    test = _render_split(per_class_test, num_classes, image_size, np.random.default_rng(seed + 10_000))
    return ImageDataset(
        name="shapes",
        train_images=train[0],
        train_labels=train[1],
        test_images=test[0],
        test_labels=test[1],
        num_classes=num_classes,
    )


def load_cifar(name: str, root: str, download: bool = False) -> ImageDataset:
    import torchvision

    cls = {"cifar10": torchvision.datasets.CIFAR10, "cifar100": torchvision.datasets.CIFAR100}[name]
    train = cls(root=root, train=True, download=download)
    test = cls(root=root, train=False, download=download)

    def convert(split):
        # torchvision stores CIFAR as (n, 32, 32, 3) uint8
        images = np.asarray(split.data, dtype=np.float32).transpose(0, 3, 1, 2) / 255.0
        labels = np.asarray(split.targets, dtype=np.int64)
        return images, labels

    train_images, train_labels = convert(train)
    test_images, test_labels = convert(test)
    return ImageDataset(
        name=name,
        train_images=train_images,
        train_labels=train_labels,
        test_images=test_images,
        test_labels=test_labels,
        num_classes=int(train_labels.max()) + 1,
    )


def load_dataset(
    name: str,
    root: str = "./data",
    download: bool = False,
    shapes_per_class_train: int = 150,
    shapes_per_class_test: int = 60,
    shapes_seed: int = 0,
) -> ImageDataset:
    if name == "shapes":
        return make_shapes_dataset(
            per_class_train=shapes_per_class_train,
            per_class_test=shapes_per_class_test,
            seed=shapes_seed,
        )
    if name in ("cifar10", "cifar100"):
        return load_cifar(name, root, download=download)
    raise ValueError(f"unknown dataset {name!r}; choose from {DATASETS}")
