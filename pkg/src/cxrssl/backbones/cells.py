"""Reduction and normal cells.

A reduction cell downsamples a feature map into a token grid, fusing a
windowed-attention branch fed by multi-scale parallel convolutions with a
plain convolutional branch, then transforms tokens with a feed-forward
network.  A normal cell keeps the grid resolution and applies the same
attention + parallel-conv + FFN wiring.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import DimensionError
from .blocks import FeedForward, ParallelConv, PyramidReduction, TokenGrid, WindowAttention


class ReductionCell(nn.Module):
    def __init__(self, c_in: int, dim: int, num_heads: int, window: int, reduction: int,
                 mlp_ratio: float, prm_rates: tuple[int, ...], pcm_groups: int):
        super().__init__()
        self.reduction = reduction
        self.prm = PyramidReduction(c_in, dim, reduction, prm_rates)
        self.pcm = ParallelConv(c_in, dim, reduction, pcm_groups)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, window)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, mlp_ratio)

    def forward(self, x: torch.Tensor) -> TokenGrid:
        """x is a channels-first map (B, C, H, W); H and W must be divisible
        by the reduction ratio."""
        if x.ndim != 4:
            raise DimensionError(f"expected (B, C, H, W), got shape {tuple(x.shape)}")
        h, w = x.shape[2], x.shape[3]
        if h % self.reduction or w % self.reduction:
            raise DimensionError(f"spatial dims {h}x{w} not divisible by reduction {self.reduction}")
        gh, gw = h // self.reduction, w // self.reduction

        tokens = TokenGrid.from_map(self.prm(x)).tokens
        tokens = tokens + self.attn(self.norm1(tokens), gh, gw)
        tokens = tokens + TokenGrid.from_map(self.pcm(x)).tokens
        tokens = tokens + self.ffn(self.norm2(tokens))
        return TokenGrid(tokens, gh, gw)


class NormalCell(nn.Module):
    def __init__(self, dim: int, num_heads: int, window: int, mlp_ratio: float, pcm_groups: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, window)
        self.pcm = ParallelConv(dim, dim, 1, pcm_groups)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, mlp_ratio)

    def forward(self, grid: TokenGrid) -> TokenGrid:
        x = grid.tokens
        local = TokenGrid.from_map(self.pcm(grid.to_map())).tokens
        x = x + self.attn(self.norm1(x), grid.grid_h, grid.grid_w)
        x = x + local
        x = x + self.ffn(self.norm2(x))
        return TokenGrid(x, grid.grid_h, grid.grid_w)
