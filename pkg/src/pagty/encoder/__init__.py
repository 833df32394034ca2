"""Triple-branch encoder: input pyramid, main CNN path and transformer branch.

Per level the main features are pooled, fused with the matching pyramid and
transformer features through a dual attention gate, and refined by a
double-conv block.  The two deepest main features are concatenated and mixed
by the dense transformer bottleneck before reaching the decoder.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..blocks import PyramidConvCascade, ResidualDoubleConv
from ..errors import ConfigError, ShapeError
from ..gates import AttentionGate, DualAttentionGate, DualAttentionGateSpec, resample_to
from .pvt import PvtBranch, PvtBranchSpec, TransformerStages
from .vit import VitBottleneck, VitBottleneckSpec

__all__ = [
    "PyramidInputs",
    "EncoderOutputs",
    "TriBranchEncoder",
    "build_pyramid",
    "PvtBranch",
    "PvtBranchSpec",
    "TransformerStages",
    "VitBottleneck",
    "VitBottleneckSpec",
]


@dataclass
class PyramidInputs:
    """The four resized copies of the input image, at 1/2 .. 1/16 scale."""

    levels: list[torch.Tensor]
    scale_factors: list[tuple[int, int]]


def build_pyramid(image: torch.Tensor) -> PyramidInputs:
    """Resize the input to the four pyramid scales H/2, H/4, H/8, H/16."""
    if image.dim() != 4:
        raise ShapeError(f"expected a [B,C,H,W] image, got {image.dim()} axes")
    h, w = image.shape[-2:]
    if h % 16 or w % 16:
        raise ShapeError(f"input size {h}x{w} must be divisible by 16; pad or resize first")
    levels, sizes = [], []
    for i in range(1, 5):
        size = (h >> i, w >> i)
        levels.append(F.interpolate(image, size=size, mode="bilinear", align_corners=False))
        sizes.append(size)
    return PyramidInputs(levels=levels, scale_factors=sizes)


@dataclass
class EncoderOutputs:
    """Everything the decoder consumes.

    ``fused`` holds the raw gate outputs per level, ``features`` the
    double-conv refinements of those, ``stem`` the full-resolution features
    and ``bottleneck`` the deepest map after token mixing.
    """

    stem: torch.Tensor
    fused: list[torch.Tensor]
    features: list[torch.Tensor]
    bottleneck: torch.Tensor


class TriBranchEncoder(nn.Module):
    def __init__(
        self,
        in_channels: int,
        input_size: tuple[int, int],
        base_width: int,
        pvt_spec: PvtBranchSpec,
        vit_spec: VitBottleneckSpec,
        use_pyramid: bool = True,
        use_pvt: bool = True,
        use_vit: bool = True,
        dag_wiring: str = "intro",
        normalization: str = "batch",
    ):
        super().__init__()
        if not (use_pyramid or use_pvt):
            raise ConfigError("at least one of the pyramid and transformer branches must stay on")
        h, w = input_size
        if h % 32 or w % 32:
            raise ConfigError(f"input size {h}x{w} must be divisible by 32")
        self.in_channels = in_channels
        self.input_size = (h, w)
        self.use_pyramid = use_pyramid
        self.use_pvt = use_pvt
        self.use_vit = use_vit

        self.stem_channels = base_width
        self.level_channels = [base_width * (1 << i) for i in range(4)]
        main_in = [base_width] + self.level_channels[:3]
        pyr_channels = self.level_channels

        self.stem = ResidualDoubleConv(in_channels, base_width, normalization)

        if use_pyramid:
            self.pyramid_blocks = nn.ModuleList(
                [
                    PyramidConvCascade.from_schedule(
                        i + 1, [in_channels] + pyr_channels[: i + 1], normalization
                    )
                    for i in range(4)
                ]
            )
        if use_pvt:
            self.pvt = PvtBranch(in_channels, pvt_spec)

        self.fused_channels = []
        gates = []
        for i in range(4):
            target = (h >> (i + 1), w >> (i + 1))
            if use_pyramid and use_pvt:
                spec = DualAttentionGateSpec(
                    pyramid_channels=pyr_channels[i],
                    main_channels=main_in[i],
                    transformer_channels=pvt_spec.channels[i],
                    target_resolution=target,
                    wiring=dag_wiring,
                )
                gates.append(DualAttentionGate(spec))
                self.fused_channels.append(spec.out_channels)
            elif use_pvt:
                gates.append(AttentionGate(main_in[i], pvt_spec.channels[i]))
                self.fused_channels.append(pvt_spec.channels[i])
            else:
                gates.append(AttentionGate(pyr_channels[i], main_in[i]))
                self.fused_channels.append(main_in[i])
        self.fuse_gates = nn.ModuleList(gates)
        self.level_blocks = nn.ModuleList(
            [
                ResidualDoubleConv(self.fused_channels[i], self.level_channels[i], normalization)
                for i in range(4)
            ]
        )

        merged = self.level_channels[3] + self.level_channels[2]
        self.bottleneck_channels = self.level_channels[3]
        if use_vit:
            if vit_spec.token_grid != (h // 16, w // 16):
                raise ConfigError(
                    f"token grid {vit_spec.token_grid} does not match input "
                    f"{h}x{w} (expected {(h // 16, w // 16)})"
                )
            self.vit = VitBottleneck(merged, vit_spec)
            self.bottleneck_block = ResidualDoubleConv(
                vit_spec.embed_dim, self.bottleneck_channels, normalization
            )
        else:
            self.bottleneck_block = ResidualDoubleConv(
                merged, self.bottleneck_channels, normalization
            )

    def forward(self, image: torch.Tensor) -> EncoderOutputs:
        if image.dim() != 4:
            raise ShapeError(f"expected a [B,C,H,W] image, got {image.dim()} axes")
        if image.shape[1] != self.in_channels or tuple(image.shape[-2:]) != self.input_size:
            raise ShapeError(
                f"encoder built for {self.in_channels}x{self.input_size}, "
                f"got {image.shape[1]}x{tuple(image.shape[-2:])}"
            )

        pyramid = build_pyramid(image) if self.use_pyramid else None
        stages = self.pvt(image) if self.use_pvt else None

        stem = self.stem(image)
        main = stem
        fused_levels: list[torch.Tensor] = []
        features: list[torch.Tensor] = []
        for i in range(4):
            pooled = F.max_pool2d(main, kernel_size=2)
            target = tuple(pooled.shape[-2:])
            if self.use_pyramid and self.use_pvt:
                pyr_feat = self.pyramid_blocks[i](pyramid.levels[i])
                fused = self.fuse_gates[i](pyr_feat, pooled, stages.stages[i])
            elif self.use_pvt:
                trans = resample_to(stages.stages[i], target)
                fused = self.fuse_gates[i](pooled, trans)
            else:
                pyr_feat = self.pyramid_blocks[i](pyramid.levels[i])
                fused = self.fuse_gates[i](pyr_feat, pooled)
            main = self.level_blocks[i](fused)
            fused_levels.append(fused)
            features.append(main)

        merged = torch.cat([features[3], F.max_pool2d(features[2], kernel_size=2)], dim=1)
        if self.use_vit:
            merged = self.vit(merged)
        bottleneck = self.bottleneck_block(merged)
        return EncoderOutputs(
            stem=stem, fused=fused_levels, features=features, bottleneck=bottleneck
        )
