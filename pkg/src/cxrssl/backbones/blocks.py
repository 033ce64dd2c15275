"""Building blocks for the hybrid conv-attention encoder.

Tokens travel as (batch, token_count, dim) with an explicit grid shape;
window attention works on non-overlapping spatial windows, padding the grid
with masked zero tokens when the window does not divide it.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import DimensionError


@dataclass
class TokenGrid:
    """A spatial grid of tokens: ``tokens`` is (B, N, C) with N = grid_h * grid_w."""

    tokens: torch.Tensor
    grid_h: int
    grid_w: int

    def __post_init__(self):
        if self.tokens.ndim != 3:
            raise DimensionError(f"tokens must be rank 3, got shape {tuple(self.tokens.shape)}")
        if self.tokens.shape[1] != self.grid_h * self.grid_w:
            raise DimensionError(
                f"token count {self.tokens.shape[1]} != grid {self.grid_h}x{self.grid_w}"
            )

    @property
    def dim(self) -> int:
        return self.tokens.shape[2]

    def to_map(self) -> torch.Tensor:
        """(B, N, C) -> channels-first feature map (B, C, H, W)."""
        b, n, c = self.tokens.shape
        return self.tokens.transpose(1, 2).reshape(b, c, self.grid_h, self.grid_w)

    @staticmethod
    def from_map(x: torch.Tensor) -> "TokenGrid":
        b, c, h, w = x.shape
        return TokenGrid(x.reshape(b, c, h * w).transpose(1, 2), h, w)


def window_partition(tokens: torch.Tensor, grid_h: int, grid_w: int, window: int,
                     pad: bool = True) -> tuple[torch.Tensor, int, int]:
    """Split a token grid into non-overlapping ``window x window`` blocks.

    Returns (blocks, padded_h, padded_w) where blocks is
    (B * n_windows, window*window, C).  When ``pad`` is False the window must
    divide both grid sides; otherwise the grid is zero-padded up to the next
    multiple (callers are responsible for masking the padded tokens).
    """
    b, n, c = tokens.shape
    if n != grid_h * grid_w:
        raise DimensionError(f"token count {n} != grid {grid_h}x{grid_w}")
    pad_h = (window - grid_h % window) % window
    pad_w = (window - grid_w % window) % window
    if (pad_h or pad_w) and not pad:
        raise DimensionError(f"window {window} does not divide grid {grid_h}x{grid_w} and padding is off")
    x = tokens.reshape(b, grid_h, grid_w, c)
    if pad_h or pad_w:
        x = F.pad(x, (0, 0, 0, pad_w, 0, pad_h))
    hp, wp = grid_h + pad_h, grid_w + pad_w
    x = x.reshape(b, hp // window, window, wp // window, window, c)
    blocks = x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)
    return blocks, hp, wp


def window_reverse(blocks: torch.Tensor, grid_h: int, grid_w: int, window: int) -> torch.Tensor:
    """Inverse of :func:`window_partition` for the (possibly padded) grid.

    ``grid_h``/``grid_w`` are the padded sides the blocks were cut from;
    callers crop back to the original grid afterwards.
    """
    if grid_h % window or grid_w % window:
        raise DimensionError(f"window {window} does not divide grid {grid_h}x{grid_w}")
    n_win = (grid_h // window) * (grid_w // window)
    if blocks.shape[0] % n_win != 0:
        raise DimensionError(f"{blocks.shape[0]} blocks do not tile a {grid_h}x{grid_w} grid")
    b = blocks.shape[0] // n_win
    c = blocks.shape[2]
    x = blocks.reshape(b, grid_h // window, grid_w // window, window, window, c)
    x = x.permute(0, 1, 3, 2, 4, 5).reshape(b, grid_h * grid_w, c)
    return x


def pad_mask(grid_h: int, grid_w: int, window: int, device, dtype) -> torch.Tensor | None:
    """Per-window additive attention mask hiding padded key tokens.

    Returns (n_windows, window*window) with 0 for real tokens and -inf for
    padding, or None when no padding is needed.
    """
    pad_h = (window - grid_h % window) % window
    pad_w = (window - grid_w % window) % window
    if not (pad_h or pad_w):
        return None
    real = torch.ones(1, grid_h * grid_w, 1, device=device, dtype=dtype)
    blocks, _, _ = window_partition(real, grid_h, grid_w, window, pad=True)
    mask = torch.where(blocks[:, :, 0] > 0, 0.0, float("-inf"))
    return mask.to(dtype)


def relative_position_index(window: int) -> torch.Tensor:
    """Pairwise relative-offset index into a (2w-1)^2 bias table."""
    coords = torch.stack(torch.meshgrid(
        torch.arange(window), torch.arange(window), indexing="ij"))  # 2, w, w
    flat = coords.reshape(2, -1)
    rel = flat[:, :, None] - flat[:, None, :]  # 2, w*w, w*w
    rel = rel.permute(1, 2, 0).contiguous()
    rel[:, :, 0] += window - 1
    rel[:, :, 1] += window - 1
    rel[:, :, 0] *= 2 * window - 1
    return rel.sum(-1)  # w*w, w*w


class WindowAttention(nn.Module):
    """Multi-head self-attention over non-overlapping windows with learned
    relative position bias."""

    def __init__(self, dim: int, num_heads: int, window: int):
        super().__init__()
        if dim % num_heads != 0:
            raise DimensionError(f"dim {dim} not divisible by num_heads {num_heads}")
        self.dim = dim
        self.num_heads = num_heads
        self.window = window
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.rel_bias = nn.Parameter(torch.zeros((2 * window - 1) ** 2, num_heads))
        self.register_buffer("rel_index", relative_position_index(window), persistent=False)
        nn.init.trunc_normal_(self.rel_bias, std=0.02)

    def forward(self, tokens: torch.Tensor, grid_h: int, grid_w: int) -> torch.Tensor:
        b, n, c = tokens.shape
        w = self.window
        blocks, hp, wp = window_partition(tokens, grid_h, grid_w, w, pad=True)
        mask = pad_mask(grid_h, grid_w, w, tokens.device, tokens.dtype)

        bw, t, _ = blocks.shape  # t = w*w
        qkv = self.qkv(blocks).reshape(bw, t, 3, self.num_heads, c // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)  # each (bw, heads, t, head_dim)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        bias = self.rel_bias[self.rel_index.reshape(-1)].reshape(t, t, -1)
        attn = attn + bias.permute(2, 0, 1).unsqueeze(0)
        if mask is not None:
            n_win = mask.shape[0]
            # mask keys: (n_win, 1, 1, t) broadcast over batch and heads
            attn = attn.reshape(bw // n_win, n_win, self.num_heads, t, t)
            attn = attn + mask.reshape(1, n_win, 1, 1, t)
            attn = attn.reshape(bw, self.num_heads, t, t)
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bw, t, c)
        out = self.proj(out)
        out = window_reverse(out, hp, wp, w)
        if hp != grid_h or wp != grid_w:
            out = out.reshape(b, hp, wp, c)[:, :grid_h, :grid_w].reshape(b, n, c)
        return out


class FeedForward(nn.Module):
    def __init__(self, dim: int, mlp_ratio: float):
        super().__init__()
        hidden = int(round(dim * mlp_ratio))
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


def _conv_groups(c_in: int, c_out: int, groups: int) -> int:
    """Grouped conv only where both channel counts allow it."""
    return groups if (c_in % groups == 0 and c_out % groups == 0) else 1


class PyramidReduction(nn.Module):
    """Multi-scale context via parallel strided convolutions at several
    dilation rates; output channels are split evenly across rates."""

    def __init__(self, c_in: int, c_out: int, stride: int, rates: tuple[int, ...]):
        super().__init__()
        if c_out % len(rates) != 0:
            raise DimensionError(f"{c_out} channels not divisible across {len(rates)} rates")
        branch = c_out // len(rates)
        self.convs = nn.ModuleList(
            nn.Conv2d(c_in, branch, kernel_size=3, stride=stride, padding=rate, dilation=rate)
            for rate in rates
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.cat([conv(x) for conv in self.convs], dim=1)


def _split_stride(stride: int) -> tuple[int, int, int]:
    """Distribute a total stride over three 3x3 convs (power-of-two strides)."""
    out = []
    for _ in range(3):
        s = 2 if stride % 2 == 0 and stride > 1 else 1
        out.append(s)
        stride //= s
    if stride != 1:
        raise DimensionError("reduction ratio must factor into at most three stride-2 convs")
    return tuple(out)


class ParallelConv(nn.Module):
    """Convolutional branch embedding local context: three 3x3 convs with
    SiLU in between, striding down to match the attention branch."""

    def __init__(self, c_in: int, c_out: int, stride: int, groups: int):
        super().__init__()
        s1, s2, s3 = _split_stride(stride)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=s1, padding=1, groups=_conv_groups(c_in, c_out, groups))
        self.conv2 = nn.Conv2d(c_out, c_out, 3, stride=s2, padding=1, groups=_conv_groups(c_out, c_out, groups))
        self.conv3 = nn.Conv2d(c_out, c_out, 3, stride=s3, padding=1, groups=_conv_groups(c_out, c_out, groups))
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.act(self.conv1(x))
        x = self.act(self.conv2(x))
        return self.conv3(x)
