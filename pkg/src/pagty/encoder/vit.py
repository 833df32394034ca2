"""Dense transformer bottleneck over the deepest encoder grid.

The fused deepest features are projected to the embedding width, flattened
into one token per grid cell (14x14 = 196 tokens at 224 input), mixed by a
stack of standard pre-norm transformer layers with learned positional
embeddings, and reshaped back into a feature map.  No class token: every
token corresponds to a spatial location consumed by the decoder.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, ShapeError


@dataclass(frozen=True)
class VitBottleneckSpec:
    token_grid: tuple[int, int] = (14, 14)
    embed_dim: int = 768
    depth: int = 12
    heads: int = 12
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by {self.heads} heads"
            )
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.token_grid[0] < 1 or self.token_grid[1] < 1:
            raise ConfigError(f"bad token grid {self.token_grid}")

    @property
    def token_count(self) -> int:
        return self.token_grid[0] * self.token_grid[1]


class SelfAttention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.store_attention = False
        self.last_attention = None

    def forward(self, x):
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, c // self.heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = (torch.matmul(q, k.transpose(-2, -1)) * self.scale).softmax(dim=-1)
        if self.store_attention:
            self.last_attention = attn.detach()
        out = torch.matmul(attn, v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class EncoderLayer(nn.Module):
    def __init__(self, dim, heads, mlp_ratio):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        x = x + self.fc2(F.gelu(self.fc1(self.norm2(x))))
        return x


class VitBottleneck(nn.Module):
    def __init__(self, in_channels: int, spec: VitBottleneckSpec):
        super().__init__()
        self.spec = spec
        self.tokenize = nn.Conv2d(in_channels, spec.embed_dim, kernel_size=1)
        self.pos_embed = nn.Parameter(torch.zeros(1, spec.token_count, spec.embed_dim))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.layers = nn.ModuleList(
            [EncoderLayer(spec.embed_dim, spec.heads, spec.mlp_ratio) for _ in range(spec.depth)]
        )
        self.norm = nn.LayerNorm(spec.embed_dim)

    @property
    def token_count(self) -> int:
        return self.spec.token_count

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        gh, gw = self.spec.token_grid
        if x.shape[-2:] != (gh, gw):
            raise ShapeError(
                f"bottleneck expects a {gh}x{gw} grid, got {tuple(x.shape[-2:])}"
            )
        tokens = self.tokenize(x).flatten(2).transpose(1, 2)
        tokens = tokens + self.pos_embed
        for layer in self.layers:
            tokens = layer(tokens)
        tokens = self.norm(tokens)
        return tokens.transpose(1, 2).reshape(x.shape[0], self.spec.embed_dim, gh, gw)

    def attention_maps(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Per-layer attention tensors [B, heads, N, N] for one forward pass."""
        for layer in self.layers:
            layer.attn.store_attention = True
        try:
            with torch.no_grad():
                self.forward(x)
            return [layer.attn.last_attention for layer in self.layers]
        finally:
            for layer in self.layers:
                layer.attn.store_attention = False
                layer.attn.last_attention = None
