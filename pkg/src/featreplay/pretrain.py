"""Phase-0 extractor pretraining: rotation label augmentation + Siamese SSL.

Every image is rotated by j * 90 degrees and classified into an extended
4N-way label space (label 4y + j). A stop-gradient Siamese branch pulls the
rotated view's projection (through a predictor) toward the detached projection
of the unrotated reference view. Total loss = ce + lambda * ssl. After
training the heads are discarded and the extractor is frozen for good.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbones import build_backbone, freeze
from .tasks import AugmentationPolicy, TaskStream

COSINE_EPS = 1e-8


@dataclass(frozen=True)
class ExtractorConfig:
    backbone: str = "resnet18"
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lambda_ssl: float = 5.0
    seed: int = 1993

    def __post_init__(self):
        if self.lambda_ssl < 0:
            raise ValueError("lambda_ssl must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "backbone": self.backbone,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "lambda_ssl": self.lambda_ssl,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ExtractorConfig":
        return cls(**payload)


def _mlp(in_dim: int, hidden: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, hidden), nn.BatchNorm1d(hidden), nn.ReLU(inplace=True), nn.Linear(hidden, out_dim)
    )


class SiameseHeads(nn.Module):
    """Extended 4N-way classifier plus projector/predictor MLPs."""

    def __init__(self, feature_dim: int, num_initial_classes: int, proj_dim: int | None = None):
        super().__init__()
        proj_dim = proj_dim or feature_dim
        self.num_initial_classes = num_initial_classes
        self.classifier = nn.Linear(feature_dim, 4 * num_initial_classes)
        self.projector = _mlp(feature_dim, feature_dim, proj_dim)
        self.predictor = _mlp(proj_dim, feature_dim, proj_dim)


def rotate_augment(image: torch.Tensor, label: int, j: int) -> tuple[torch.Tensor, int]:
    """Rotate by j * 90 degrees and extend the label to 4 * label + j."""
    if j not in (0, 1, 2, 3):
        raise ValueError(f"rotation index must be in 0..3, got {j}")
    if image.shape[-1] != image.shape[-2]:
        raise ValueError("rotation label augmentation requires square images")
    rotated = torch.rot90(image, k=j, dims=(-2, -1))
    return rotated, 4 * label + j


def rotate_batch(images: torch.Tensor, labels: torch.Tensor, js: torch.Tensor):
    """Vectorized rotate_augment: groups the batch by rotation index."""
    rotated = images.clone()
    for j in (1, 2, 3):
        sel = js == j
        if sel.any():
            rotated[sel] = torch.rot90(images[sel], k=j, dims=(-2, -1))
    return rotated, 4 * labels + js


def ce_loss(logits: torch.Tensor, extended_labels: torch.Tensor) -> torch.Tensor:
    if extended_labels.max() >= logits.shape[1] or extended_labels.min() < 0:
        raise ValueError("extended label out of range for classifier width")
    return F.cross_entropy(logits, extended_labels)


def ssl_loss(z_rotated: torch.Tensor, z_reference: torch.Tensor) -> torch.Tensor:
    """1 - cos(predictor output, stop-gradient reference projection)."""
    return (1.0 - F.cosine_similarity(z_rotated, z_reference.detach(), dim=-1, eps=COSINE_EPS)).mean()


def combined_loss(ce: torch.Tensor, ssl: torch.Tensor, lambda_ssl: float) -> torch.Tensor:
    if lambda_ssl < 0:
        raise ValueError("lambda_ssl must be nonnegative")
    return ce + lambda_ssl * ssl


def train_extractor(
    stream: TaskStream,
    policy: AugmentationPolicy,
    config: ExtractorConfig,
    phase: int = 0,
) -> tuple[nn.Module, list[float]]:
    """Train on one phase's stream, then freeze the backbone and drop the heads."""
    torch.manual_seed(config.seed)
    backbone = build_backbone(config.backbone)
    num_classes = len(stream.class_ids(phase))
    heads = SiameseHeads(backbone.feature_dim, num_classes)
    params = list(backbone.parameters()) + list(heads.parameters())
    optimizer = torch.optim.SGD(
        params, lr=config.learning_rate, momentum=config.momentum, weight_decay=config.weight_decay
    )
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=config.epochs)
    rotation_rng = torch.Generator().manual_seed(config.seed + 7)
    label_base = min(stream.class_ids(phase))  # contiguous ids start here

    backbone.train()
    heads.train()
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        total, batches = 0.0, 0
        for step, (images, labels) in enumerate(
            stream.iterate_phase(phase, policy, config.batch_size, "train", seed=config.seed + epoch)
        ):
            js = torch.randint(0, 4, (images.shape[0],), generator=rotation_rng)
            rotated, extended = rotate_batch(images, labels - label_base, js)
            feats_rot = backbone(rotated)
            logits = heads.classifier(feats_rot)
            z_rot = heads.predictor(heads.projector(feats_rot))
            z_ref = heads.projector(backbone(images))
            loss = combined_loss(ce_loss(logits, extended), ssl_loss(z_rot, z_ref), config.lambda_ssl)
            if not torch.isfinite(loss):
                raise RuntimeError(f"pretraining diverged at epoch {epoch} step {step}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            batches += 1
        scheduler.step()
        epoch_losses.append(total / batches)
    return freeze(backbone), epoch_losses


@torch.no_grad()
def extract_features(
    backbone: nn.Module,
    images: torch.Tensor | np.ndarray,
    policy: AugmentationPolicy,
    batch_size: int = 256,
) -> np.ndarray:
    """Deterministic features for caching: normalization only, no augmentation."""
    from .tasks import augment_batch

    if isinstance(images, np.ndarray):
        images = torch.from_numpy(images)
    backbone.eval()
    test_policy = policy.test_time()
    chunks = []
    for start in range(0, images.shape[0], batch_size):
        batch = augment_batch(images[start : start + batch_size], test_policy, None)
        feats = backbone(batch)
        if feats.shape[1] != backbone.feature_dim:
            raise ValueError("backbone returned unexpected feature width")
        chunks.append(feats.numpy().astype(np.float32))
    return np.concatenate(chunks, axis=0)


def save_extractor(path, backbone_name: str, backbone: nn.Module, seed: int) -> None:
    torch.save(
        {
            "backbone": backbone_name,
            "feature_dim": backbone.feature_dim,
            "seed": seed,
            "state": backbone.state_dict(),
        },
        path,
    )


def load_extractor(path) -> tuple[nn.Module, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    backbone = build_backbone(payload["backbone"])
    backbone.load_state_dict(payload["state"])
    return freeze(backbone), payload
