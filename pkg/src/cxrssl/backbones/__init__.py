from __future__ import annotations

import torch.nn as nn

from ..errors import ConfigError
from .blocks import TokenGrid, WindowAttention, window_partition, window_reverse
from .cells import NormalCell, ReductionCell
from .config import (
    BACKBONE_KINDS,
    BackboneConfig,
    RESNET50,
    VIT_S16,
    VITAEV2_REFERENCE,
    VITAEV2_TINY,
    reference_config,
)
from .resnet import ResNet50Encoder
from .vit import VisionTransformerEncoder
from .vitae import HybridPyramidEncoder

__all__ = [
    "BACKBONE_KINDS", "BackboneConfig", "HybridPyramidEncoder", "NormalCell",
    "ReductionCell", "ResNet50Encoder", "RESNET50", "TokenGrid", "VIT_S16",
    "VITAEV2_REFERENCE", "VITAEV2_TINY", "VisionTransformerEncoder",
    "WindowAttention", "build_backbone", "count_params", "reference_config",
    "window_partition", "window_reverse",
]


def build_backbone(cfg: BackboneConfig) -> nn.Module:
    """Instantiate the encoder for a config; all encoders map a (B, C, H, W)
    image batch to a (B, embed_dim) embedding."""
    if cfg.kind == "vitaev2":
        return HybridPyramidEncoder(cfg)
    if cfg.kind == "vit":
        return VisionTransformerEncoder(cfg)
    if cfg.kind == "resnet50":
        return ResNet50Encoder(cfg)
    raise ConfigError(f"unknown backbone kind {cfg.kind!r}")


def count_params(model_or_cfg) -> int:
    """Exact trainable parameter count of a module, or of the encoder a
    config describes."""
    if isinstance(model_or_cfg, BackboneConfig):
        model_or_cfg = build_backbone(model_or_cfg)
    return sum(p.numel() for p in model_or_cfg.parameters() if p.requires_grad)
