"""Four-stage pyramid transformer branch.

Each stage shrinks the spatial grid with an overlapping patch embedding and
runs transformer blocks whose attention reduces the key/value grid by a
per-stage ratio, so early high-resolution stages stay affordable.  Stage
outputs form a feature pyramid at strides 4, 8, 16 and 32.
"""

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, ShapeError

PVT_STRIDES = (4, 8, 16, 32)


@dataclass
class TransformerStages:
    """Stage outputs t1..t4 with their stride/channel metadata."""

    stages: list[torch.Tensor]
    strides: tuple[int, ...] = PVT_STRIDES
    channels: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.channels:
            self.channels = tuple(int(t.shape[1]) for t in self.stages)


@dataclass(frozen=True)
class PvtBranchSpec:
    channels: tuple[int, int, int, int] = (64, 128, 320, 512)
    depths: tuple[int, int, int, int] = (2, 2, 2, 2)
    heads: tuple[int, int, int, int] = (1, 2, 5, 8)
    sr_ratios: tuple[int, int, int, int] = (8, 4, 2, 1)
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if list(self.channels) != sorted(self.channels):
            raise ConfigError(f"stage channels must be non-decreasing, got {self.channels}")
        for dim, h in zip(self.channels, self.heads):
            if dim % h != 0:
                raise ConfigError(f"stage width {dim} not divisible by {h} heads")
        for d in self.depths:
            if d < 1:
                raise ConfigError("every stage needs at least one block")


class OverlapPatchEmbed(nn.Module):
    """Strided convolution producing overlapping patch tokens."""

    def __init__(self, in_channels, embed_dim, kernel_size, stride):
        super().__init__()
        self.proj = nn.Conv2d(
            in_channels, embed_dim, kernel_size=kernel_size, stride=stride,
            padding=kernel_size // 2,
        )
        self.norm = nn.LayerNorm(embed_dim)

    def forward(self, x):
        x = self.proj(x)
        h, w = x.shape[-2:]
        x = x.flatten(2).transpose(1, 2)
        return self.norm(x), (h, w)


class SpatialReductionAttention(nn.Module):
    """Multi-head attention with a strided-conv reduction of keys/values."""

    def __init__(self, dim, heads, sr_ratio):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, dim * 2)
        self.proj = nn.Linear(dim, dim)
        self.sr_ratio = sr_ratio
        if sr_ratio > 1:
            self.sr = nn.Conv2d(dim, dim, kernel_size=sr_ratio, stride=sr_ratio)
            self.sr_norm = nn.LayerNorm(dim)
        self.store_attention = False
        self.last_attention = None

    def forward(self, x, hw):
        b, n, c = x.shape
        q = self.q(x).reshape(b, n, self.heads, c // self.heads).permute(0, 2, 1, 3)

        if self.sr_ratio > 1:
            h, w = hw
            feat = x.transpose(1, 2).reshape(b, c, h, w)
            feat = self.sr(feat).reshape(b, c, -1).transpose(1, 2)
            feat = self.sr_norm(feat)
        else:
            feat = x
        k, v = self.kv(feat).chunk(2, dim=-1)
        k = k.reshape(b, -1, self.heads, c // self.heads).permute(0, 2, 3, 1)
        v = v.reshape(b, -1, self.heads, c // self.heads).permute(0, 2, 1, 3)

        attn = (torch.matmul(q, k) * self.scale).softmax(dim=-1)
        if self.store_attention:
            self.last_attention = attn.detach()
        out = torch.matmul(attn, v).permute(0, 2, 1, 3).reshape(b, n, c)
        return self.proj(out)


class MixFeedForward(nn.Module):
    """Token MLP with a depthwise 3x3 conv between the two projections."""

    def __init__(self, dim, mlp_ratio):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.fc1 = nn.Linear(dim, hidden)
        self.dwconv = nn.Conv2d(hidden, hidden, kernel_size=3, padding=1, groups=hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x, hw):
        b, n, _ = x.shape
        h, w = hw
        x = self.fc1(x)
        x = x.transpose(1, 2).reshape(b, -1, h, w)
        x = self.dwconv(x)
        x = x.flatten(2).transpose(1, 2)
        return self.fc2(F.gelu(x))


class PvtBlock(nn.Module):
    def __init__(self, dim, heads, sr_ratio, mlp_ratio):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SpatialReductionAttention(dim, heads, sr_ratio)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = MixFeedForward(dim, mlp_ratio)

    def forward(self, x, hw):
        x = x + self.attn(self.norm1(x), hw)
        x = x + self.mlp(self.norm2(x), hw)
        return x


class PvtStage(nn.Module):
    def __init__(self, in_channels, dim, depth, heads, sr_ratio, mlp_ratio, first):
        super().__init__()
        self.embed = OverlapPatchEmbed(
            in_channels, dim, kernel_size=7 if first else 3, stride=4 if first else 2
        )
        self.blocks = nn.ModuleList(
            [PvtBlock(dim, heads, sr_ratio, mlp_ratio) for _ in range(depth)]
        )
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        tokens, hw = self.embed(x)
        for block in self.blocks:
            tokens = block(tokens, hw)
        tokens = self.norm(tokens)
        h, w = hw
        return tokens.transpose(1, 2).reshape(x.shape[0], -1, h, w)


class PvtBranch(nn.Module):
    """The transformer encoder branch: image in, four stage maps out."""

    def __init__(self, in_channels: int, spec: PvtBranchSpec | None = None):
        super().__init__()
        self.spec = spec or PvtBranchSpec()
        stages = []
        prev = in_channels
        for i in range(4):
            stages.append(
                PvtStage(
                    prev,
                    self.spec.channels[i],
                    self.spec.depths[i],
                    self.spec.heads[i],
                    self.spec.sr_ratios[i],
                    self.spec.mlp_ratio,
                    first=(i == 0),
                )
            )
            prev = self.spec.channels[i]
        self.stages = nn.ModuleList(stages)

    def forward(self, image: torch.Tensor) -> TransformerStages:
        h, w = image.shape[-2:]
        if h % 32 or w % 32:
            raise ShapeError(f"input size {h}x{w} must be divisible by 32")
        outputs = []
        x = image
        for stage in self.stages:
            x = stage(x)
            outputs.append(x)
        return TransformerStages(stages=outputs, channels=self.spec.channels)
