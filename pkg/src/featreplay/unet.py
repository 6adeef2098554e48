"""Parameter-reduced 1-D U-Net noise predictor for feature vectors.

A feature vector is treated as a single-channel sequence. The network keeps
the classic U-Net depth (3 down blocks, 1 middle block, 3 up blocks) but is
aggressively slimmed: no attention anywhere, depthwise separable convolutions
everywhere except the initial block, additive long skip connections instead of
concatenation, and stride-4 downsampling convolutions (total factor 64).

Each block is two residual units of two convolutions each. Conditioning is a
sinusoidal timestep embedding plus a class embedding (one-hot projected by a
2-layer MLP); their sum is injected into every residual unit. Class index
``num_classes`` is the learned null token used for classifier-free guidance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

DOWNSAMPLE_FACTOR = 4
NUM_DOWN_BLOCKS = 3
TOTAL_DOWNSAMPLE = DOWNSAMPLE_FACTOR**NUM_DOWN_BLOCKS


@dataclass(frozen=True)
class UNet1DConfig:
    num_classes: int
    widths: tuple[int, ...] = (32, 32, 64, 64, 128)  # stem, down1, down2, down3, middle
    width_multiplier: int = 1
    embed_dim: int = 128

    def __post_init__(self):
        if len(self.widths) != 5:
            raise ValueError("widths must list stem, three down blocks and the middle")
        if self.num_classes < 1:
            raise ValueError("need at least one class")

    @property
    def scaled_widths(self) -> tuple[int, ...]:
        return tuple(w * self.width_multiplier for w in self.widths)

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "widths": list(self.widths),
            "width_multiplier": self.width_multiplier,
            "embed_dim": self.embed_dim,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "UNet1DConfig":
        return cls(
            num_classes=payload["num_classes"],
            widths=tuple(payload["widths"]),
            width_multiplier=payload["width_multiplier"],
            embed_dim=payload["embed_dim"],
        )


def padded_length(dim: int) -> int:
    """Smallest multiple of the total downsampling factor that fits dim."""
    return ((dim + TOTAL_DOWNSAMPLE - 1) // TOTAL_DOWNSAMPLE) * TOTAL_DOWNSAMPLE


class SinusoidalEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        if dim % 2:
            raise ValueError("embedding dim must be even")
        self.dim = dim

    def forward(self, steps: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            -math.log(10000.0) * torch.arange(half, device=steps.device, dtype=torch.float32) / (half - 1)
        )
        angles = steps.float()[:, None] * freqs[None, :]
        return torch.cat([angles.sin(), angles.cos()], dim=-1)


def _conv(in_ch: int, out_ch: int, separable: bool) -> nn.Module:
    if not separable:
        return nn.Conv1d(in_ch, out_ch, 3, padding=1)
    return nn.Sequential(
        nn.Conv1d(in_ch, in_ch, 3, padding=1, groups=in_ch),
        nn.Conv1d(in_ch, out_ch, 1),
    )


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, channels), channels)


class ResidualUnit(nn.Module):
    """norm-act-conv twice with conditioning added between, plus a skip."""

    def __init__(self, in_ch: int, out_ch: int, embed_dim: int, separable: bool):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.conv1 = _conv(in_ch, out_ch, separable)
        self.embed_proj = nn.Linear(embed_dim, out_ch)
        self.norm2 = _norm(out_ch)
        self.conv2 = _conv(out_ch, out_ch, separable)
        self.skip = nn.Conv1d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.embed_proj(embedding)[:, :, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class UNet1D(nn.Module):
    def __init__(self, config: UNet1DConfig):
        super().__init__()
        self.config = config
        stem_w, d1, d2, d3, mid = config.scaled_widths
        embed = config.embed_dim

        self.time_embed = nn.Sequential(
            SinusoidalEmbedding(embed), nn.Linear(embed, embed), nn.SiLU(), nn.Linear(embed, embed)
        )
        # one-hot with a trailing null-token slot, projected by a 2-layer MLP
        self.class_embed = nn.Sequential(
            nn.Linear(config.num_classes + 1, embed), nn.SiLU(), nn.Linear(embed, embed)
        )

        self.stem = nn.Conv1d(1, stem_w, 3, padding=1)
        # the initial block keeps regular convolutions; everything after is separable
        self.down_blocks = nn.ModuleList(
            [
                _unit_pair(stem_w, d1, embed, separable=False),
                _unit_pair(d1, d2, embed, separable=True),
                _unit_pair(d2, d3, embed, separable=True),
            ]
        )
        self.downsamples = nn.ModuleList(
            [
                nn.Conv1d(d1, d1, DOWNSAMPLE_FACTOR, stride=DOWNSAMPLE_FACTOR),
                nn.Conv1d(d2, d2, DOWNSAMPLE_FACTOR, stride=DOWNSAMPLE_FACTOR),
                nn.Conv1d(d3, d3, DOWNSAMPLE_FACTOR, stride=DOWNSAMPLE_FACTOR),
            ]
        )
        self.middle = _unit_pair(d3, mid, embed, separable=True)
        self.upsamples = nn.ModuleList(
            [
                nn.ConvTranspose1d(mid, d3, DOWNSAMPLE_FACTOR, stride=DOWNSAMPLE_FACTOR),
                nn.ConvTranspose1d(d3, d2, DOWNSAMPLE_FACTOR, stride=DOWNSAMPLE_FACTOR),
                nn.ConvTranspose1d(d1, d1, DOWNSAMPLE_FACTOR, stride=DOWNSAMPLE_FACTOR),
            ]
        )
        self.up_blocks = nn.ModuleList(
            [
                _unit_pair(d3, d3, embed, separable=True),
                _unit_pair(d2, d1, embed, separable=True),
                _unit_pair(d1, stem_w, embed, separable=True),
            ]
        )
        self.head_norm = _norm(stem_w)
        self.head = nn.Conv1d(stem_w, 1, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    @property
    def null_class(self) -> int:
        return self.config.num_classes

    def forward(self, x: torch.Tensor, steps: torch.Tensor, classes: torch.Tensor) -> torch.Tensor:
        """Predict the noise in x; classes == num_classes selects the null token."""
        if x.ndim != 3 or x.shape[1] != 1:
            raise ValueError(f"expected (batch, 1, length) input, got {tuple(x.shape)}")
        if x.shape[2] % TOTAL_DOWNSAMPLE:
            raise ValueError(f"length {x.shape[2]} not divisible by {TOTAL_DOWNSAMPLE}")
        onehot = F.one_hot(classes.long(), self.config.num_classes + 1).float()
        embedding = self.time_embed(steps) + self.class_embed(onehot)

        h = self.stem(x)
        skips = []
        for block, down in zip(self.down_blocks, self.downsamples):
            for unit in block:
                h = unit(h, embedding)
            skips.append(h)
            h = down(h)
        for unit in self.middle:
            h = unit(h, embedding)
        for up, skip, block in zip(self.upsamples, reversed(skips), self.up_blocks):
            h = up(h) + skip
            for unit in block:
                h = unit(h, embedding)
        return self.head(F.silu(self.head_norm(h)))


def _unit_pair(in_ch: int, out_ch: int, embed: int, separable: bool) -> nn.ModuleList:
    return nn.ModuleList(
        [
            ResidualUnit(in_ch, out_ch, embed, separable),
            ResidualUnit(out_ch, out_ch, embed, separable),
        ]
    )


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
