"""Feature extractor backbones.

Two options: the standard 18-layer residual network adapted for 32x32 inputs
(512-d features, the full-scale default) and a small 4-block CNN (128-d) that
keeps CPU-only runs tractable. Both return pooled feature vectors; classifier
heads live elsewhere.
"""

from __future__ import annotations

import torch
import torch.nn as nn

BACKBONES = ("resnet18", "smallconv")


def _conv_bn(in_ch: int, out_ch: int) -> list[nn.Module]:
    return [nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False), nn.BatchNorm2d(out_ch), nn.ReLU(inplace=True)]


class SmallConvNet(nn.Module):
    """4 blocks of two 3x3 convs + pool; global average pooled 128-d output."""

    feature_dim = 128

    def __init__(self):
        super().__init__()
        widths = (3, 32, 64, 128, 128)
        blocks = []
        for in_ch, out_ch in zip(widths[:-1], widths[1:]):
            blocks += _conv_bn(in_ch, out_ch) + _conv_bn(out_ch, out_ch) + [nn.MaxPool2d(2)]
        self.features = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pool(self.features(x)).flatten(1)


class CifarResNet18(nn.Module):
    """torchvision resnet18 with a 3x3 stem and no initial pooling (32x32 inputs)."""

    feature_dim = 512

    def __init__(self):
        super().__init__()
        from torchvision.models import resnet18

        net = resnet18(weights=None)
        net.conv1 = nn.Conv2d(3, 64, 3, stride=1, padding=1, bias=False)
        net.maxpool = nn.Identity()
        net.fc = nn.Identity()
        self.net = net

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def build_backbone(name: str) -> nn.Module:
    if name == "resnet18":
        return CifarResNet18()
    if name == "smallconv":
        return SmallConvNet()
    raise ValueError(f"unknown backbone {name!r}; choose from {BACKBONES}")


def freeze(module: nn.Module) -> nn.Module:
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module
