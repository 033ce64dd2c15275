"""Hybrid conv-attention pyramid encoder.

Each stage opens with a reduction cell that shrinks the grid and lifts the
channel count, followed by a run of normal cells at that resolution.  The
embedding is the mean over final-stage tokens after a last normalization
(no class token), optionally projected when the configured embedding size
differs from the last stage width.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import DimensionError
from .blocks import TokenGrid
from .cells import NormalCell, ReductionCell
from .config import BackboneConfig


class HybridPyramidEncoder(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        stages = []
        c_in = cfg.in_channels
        for dim, depth, heads, ratio in zip(cfg.stage_dims, cfg.stage_depths,
                                            cfg.num_heads, cfg.reduction_ratios):
            stage = nn.ModuleDict({
                "reduce": ReductionCell(c_in, dim, heads, cfg.window_size, ratio,
                                        cfg.mlp_ratio, cfg.prm_rates, cfg.pcm_groups),
                "cells": nn.ModuleList(
                    NormalCell(dim, heads, cfg.window_size, cfg.mlp_ratio, cfg.pcm_groups)
                    for _ in range(depth)
                ),
            })
            stages.append(stage)
            c_in = dim
        self.stages = nn.ModuleList(stages)
        self.norm = nn.LayerNorm(cfg.stage_dims[-1])
        if cfg.embed_dim != cfg.stage_dims[-1]:
            self.neck = nn.Linear(cfg.stage_dims[-1], cfg.embed_dim)
        else:
            self.neck = nn.Identity()
        self.apply(_init_weights)

    @property
    def embed_dim(self) -> int:
        return self.cfg.embed_dim

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4:
            raise DimensionError(f"expected (B, C, H, W), got shape {tuple(images.shape)}")
        if images.shape[1] != self.cfg.in_channels:
            raise DimensionError(f"expected {self.cfg.in_channels} channels, got {images.shape[1]}")
        if images.shape[2] != self.cfg.image_size or images.shape[3] != self.cfg.image_size:
            raise DimensionError(
                f"expected {self.cfg.image_size}x{self.cfg.image_size} input, "
                f"got {images.shape[2]}x{images.shape[3]}"
            )
        x = images
        grid: TokenGrid | None = None
        for stage in self.stages:
            fmap = x if grid is None else grid.to_map()
            grid = stage["reduce"](fmap)
            for cell in stage["cells"]:
                grid = cell(grid)
        tokens = self.norm(grid.tokens)
        return self.neck(tokens.mean(dim=1))


def _init_weights(module: nn.Module):
    if isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Conv2d):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)
