"""Residual double-convolution blocks and the pyramid conv cascades.

``ResidualDoubleConv`` is the basic unit used everywhere in the encoder and
decoder: two 3x3 convolutions with normalization, summed with a 1x1
projection of the input, then ReLU.  ``PyramidConvCascade`` chains one such
block per pyramid level (one block at level 1, four at level 4).
"""

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .errors import ConfigError, ShapeError

NORM_KINDS = ("batch", "group", "none")


def _group_count(channels: int) -> int:
    # largest divisor of `channels` not exceeding 8
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    return 1


def make_norm(kind: str, channels: int) -> nn.Module:
    if kind == "batch":
        return nn.BatchNorm2d(channels)
    if kind == "group":
        return nn.GroupNorm(_group_count(channels), channels)
    if kind == "none":
        return nn.Identity()
    raise ConfigError(f"unknown normalization {kind!r}, expected one of {NORM_KINDS}")


@dataclass(frozen=True)
class DConvBSpec:
    """Shape contract of a residual double-conv block.

    Main path kernels are fixed at 3x3 (stride 1, padding 1) and the skip
    projection at 1x1, so spatial size is always preserved.
    """

    in_channels: int
    out_channels: int
    normalization: str = "batch"

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError(
                f"channel counts must be >= 1, got {self.in_channels}->{self.out_channels}"
            )
        if self.normalization not in NORM_KINDS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")

    def param_count(self) -> int:
        """Closed-form trainable parameter count of the block."""
        cin, cout = self.in_channels, self.out_channels
        n = cin * cout * 9 + cout      # conv1 3x3 + bias
        n += cout * cout * 9 + cout    # conv2 3x3 + bias
        n += cin * cout + cout         # 1x1 skip + bias
        if self.normalization in ("batch", "group"):
            n += 2 * (2 * cout)        # scale + shift per norm
        return n


@dataclass(frozen=True)
class PConvBSpec:
    """A pyramid level's cascade of double-conv blocks."""

    level: int
    cascade: tuple[DConvBSpec, ...]

    def __post_init__(self):
        if not 1 <= self.level <= 4:
            raise ConfigError(f"pyramid level must be in 1..4, got {self.level}")
        if len(self.cascade) != self.level:
            raise ConfigError(
                f"level {self.level} cascade must hold {self.level} blocks, "
                f"got {len(self.cascade)}"
            )
        for a, b in zip(self.cascade, self.cascade[1:]):
            if a.out_channels != b.in_channels:
                raise ConfigError(
                    f"cascade channels do not chain: {a.out_channels} -> {b.in_channels}"
                )

    @classmethod
    def from_schedule(cls, level: int, schedule, normalization: str = "batch"):
        """Build a spec from a channel schedule [in, c1, ..., c_level]."""
        if len(schedule) != level + 1:
            raise ConfigError(
                f"schedule for level {level} needs {level + 1} entries, got {len(schedule)}"
            )
        cascade = tuple(
            DConvBSpec(schedule[i], schedule[i + 1], normalization) for i in range(level)
        )
        return cls(level=level, cascade=cascade)

    @property
    def out_channels(self) -> int:
        return self.cascade[-1].out_channels


class ResidualDoubleConv(nn.Module):
    """Conv3x3 -> norm -> ReLU -> Conv3x3 -> norm, plus a 1x1 skip, then ReLU.

    The skip projection carries no normalization; the residual sum happens
    after the second norm and before the final activation.
    """

    def __init__(self, in_channels: int, out_channels: int, normalization: str = "batch"):
        super().__init__()
        self.spec = DConvBSpec(in_channels, out_channels, normalization)
        self.conv1 = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)
        self.norm1 = make_norm(normalization, out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)
        self.norm2 = make_norm(normalization, out_channels)
        self.skip = nn.Conv2d(in_channels, out_channels, kernel_size=1)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4:
            raise ShapeError(f"expected a [B,C,H,W] tensor, got {x.dim()} axes")
        if x.shape[1] != self.spec.in_channels:
            raise ConfigError(
                f"block expects {self.spec.in_channels} input channels, got {x.shape[1]}"
            )
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return self.act(h + self.skip(x))


class PyramidConvCascade(nn.Module):
    """Sequential double-conv blocks applied to one resized pyramid input."""

    def __init__(self, spec: PConvBSpec):
        super().__init__()
        self.spec = spec
        self.blocks = nn.Sequential(
            *[
                ResidualDoubleConv(s.in_channels, s.out_channels, s.normalization)
                for s in spec.cascade
            ]
        )

    @classmethod
    def from_schedule(cls, level: int, schedule, normalization: str = "batch"):
        return cls(PConvBSpec.from_schedule(level, schedule, normalization))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.blocks(x)
