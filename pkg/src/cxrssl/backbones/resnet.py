"""ResNet-50 trunk from torchvision with the classifier removed.

The first conv is swapped out when the configured input channel count is
not 3 (grayscale sources are normally replicated to 3 channels at load
time instead, so this is an escape hatch)."""

from __future__ import annotations

import torch
import torch.nn as nn
from torchvision.models import resnet50

from ..errors import ConfigError, DimensionError
from .config import BackboneConfig


class ResNet50Encoder(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        if cfg.embed_dim != 2048:
            raise ConfigError("resnet50 produces a fixed 2048-dim embedding; set embed_dim = 2048")
        self.cfg = cfg
        net = resnet50(weights=None)
        if cfg.in_channels != 3:
            net.conv1 = nn.Conv2d(cfg.in_channels, 64, kernel_size=7, stride=2, padding=3, bias=False)
        net.fc = nn.Identity()
        self.net = net

    @property
    def embed_dim(self) -> int:
        return 2048

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4 or images.shape[1] != self.cfg.in_channels:
            raise DimensionError(f"expected (B, {self.cfg.in_channels}, H, W), got {tuple(images.shape)}")
        return self.net(images)
