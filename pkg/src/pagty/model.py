"""Model assembly: configuration, encoder + decoder wiring and the loss.

The decoder is U-Net style: four stages, each upsampling by 2 and
concatenating the matching-resolution skips before a double-conv block.
With the default ``dual_feature`` skip mode a stage receives both the raw
gate fusion and the refined main-branch features of its level; the
``two_levels`` mode feeds skips only to the two deepest stages.
"""

from dataclasses import dataclass, field, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import NORM_KINDS, ResidualDoubleConv
from .encoder import PvtBranchSpec, TriBranchEncoder, VitBottleneckSpec
from .errors import ConfigError, DataError, ShapeError
from .gates import DAG_WIRINGS

SKIP_MODES = ("dual_feature", "two_levels")


@dataclass(frozen=True)
class AblationFlags:
    """Branch toggles; the main CNN path always exists."""

    pyr: bool = True
    pvt: bool = True
    vit: bool = True

    def __post_init__(self):
        if not (self.pyr or self.pvt):
            raise ConfigError(
                "flags: pyr and pvt cannot both be off; one gate input must remain"
            )


@dataclass
class ModelConfig:
    num_classes: int
    input_size: tuple[int, int] = (224, 224)
    in_channels: int = 3
    base_width: int = 64
    pvt_channels: tuple[int, int, int, int] = (64, 128, 320, 512)
    pvt_depths: tuple[int, int, int, int] = (2, 2, 2, 2)
    pvt_heads: tuple[int, int, int, int] = (1, 2, 4, 8)
    vit: VitBottleneckSpec = field(default_factory=VitBottleneckSpec)
    flags: AblationFlags = field(default_factory=AblationFlags)
    dag_wiring: str = "intro"
    normalization: str = "batch"
    skip_mode: str = "dual_feature"
    # per-channel training-split statistics, filled in by the training loop
    norm_mean: tuple[float, ...] | None = None
    norm_std: tuple[float, ...] | None = None

    def __post_init__(self):
        if isinstance(self.input_size, int):
            self.input_size = (self.input_size, self.input_size)
        self.input_size = tuple(self.input_size)
        h, w = self.input_size
        if h % 32 or w % 32:
            raise ConfigError(f"input_size: {h}x{w} is not divisible by 32")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes: must be >= 1, got {self.num_classes}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels: must be >= 1, got {self.in_channels}")
        if self.base_width < 1:
            raise ConfigError(f"base_width: must be >= 1, got {self.base_width}")
        if self.dag_wiring not in DAG_WIRINGS:
            raise ConfigError(f"dag_wiring: {self.dag_wiring!r} not in {DAG_WIRINGS}")
        if self.normalization not in NORM_KINDS:
            raise ConfigError(f"normalization: {self.normalization!r} not in {NORM_KINDS}")
        if self.skip_mode not in SKIP_MODES:
            raise ConfigError(f"skip_mode: {self.skip_mode!r} not in {SKIP_MODES}")
        self.pvt_channels = tuple(self.pvt_channels)
        self.pvt_depths = tuple(self.pvt_depths)
        self.pvt_heads = tuple(self.pvt_heads)
        for name in ("pvt_channels", "pvt_depths", "pvt_heads"):
            if len(getattr(self, name)) != 4:
                raise ConfigError(f"{name}: need exactly 4 entries")
        if isinstance(self.flags, dict):
            self.flags = AblationFlags(**self.flags)
        if isinstance(self.vit, dict):
            self.vit = VitBottleneckSpec(**{
                k: tuple(v) if k == "token_grid" else v for k, v in self.vit.items()
            })
        # the token grid is derived from the input size, never free
        grid = (h // 16, w // 16)
        if self.vit.token_grid != grid:
            self.vit = VitBottleneckSpec(
                token_grid=grid,
                embed_dim=self.vit.embed_dim,
                depth=self.vit.depth,
                heads=self.vit.heads,
                mlp_ratio=self.vit.mlp_ratio,
            )
        if self.norm_mean is not None:
            self.norm_mean = tuple(float(v) for v in self.norm_mean)
        if self.norm_std is not None:
            self.norm_std = tuple(float(v) for v in self.norm_std)

    @classmethod
    def toy(cls, num_classes: int = 3, **overrides) -> "ModelConfig":
        """A desk-scale configuration: 64x64 input, 4x4 token grid."""
        base = dict(
            num_classes=num_classes,
            input_size=(64, 64),
            in_channels=3,
            base_width=16,
            pvt_channels=(16, 32, 64, 128),
            pvt_depths=(1, 1, 1, 1),
            pvt_heads=(1, 2, 4, 8),
            vit=VitBottleneckSpec(token_grid=(4, 4), embed_dim=96, depth=2, heads=4, mlp_ratio=2.0),
        )
        base.update(overrides)
        return cls(**base)

    def pvt_spec(self) -> PvtBranchSpec:
        return PvtBranchSpec(
            channels=self.pvt_channels, depths=self.pvt_depths, heads=self.pvt_heads
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = asdict(self.flags)
        d["vit"] = asdict(self.vit)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**d)


class DecoderStage(nn.Module):
    def __init__(self, in_channels, skip_channels, out_channels, normalization):
        super().__init__()
        self.block = ResidualDoubleConv(in_channels + skip_channels, out_channels, normalization)

    def forward(self, x, skips):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        if skips:
            x = torch.cat([x, *skips], dim=1)
        return self.block(x)


class PagTransYnet(nn.Module):
    """Triple-branch encoder, dense transformer bottleneck, U-Net decoder."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = TriBranchEncoder(
            in_channels=config.in_channels,
            input_size=config.input_size,
            base_width=config.base_width,
            pvt_spec=config.pvt_spec(),
            vit_spec=config.vit,
            use_pyramid=config.flags.pyr,
            use_pvt=config.flags.pvt,
            use_vit=config.flags.vit,
            dag_wiring=config.dag_wiring,
            normalization=config.normalization,
        )
        widths = self.encoder.level_channels          # [W1, W2, W3, W4]
        fused = self.encoder.fused_channels
        stem = self.encoder.stem_channels

        if config.skip_mode == "dual_feature":
            skip_ch = [fused[2] + widths[2], fused[1] + widths[1], fused[0] + widths[0], stem]
        else:
            skip_ch = [fused[2] + widths[2], fused[1] + widths[1], 0, 0]
        self._skip_channels = skip_ch

        ins = [self.encoder.bottleneck_channels, widths[2], widths[1], widths[0]]
        outs = [widths[2], widths[1], widths[0], stem]
        self.decoder = nn.ModuleList(
            [
                DecoderStage(ins[i], skip_ch[i], outs[i], config.normalization)
                for i in range(4)
            ]
        )
        self.head = nn.Conv2d(stem, config.num_classes, kernel_size=1)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        enc = self.encoder(image)
        dual = self.config.skip_mode == "dual_feature"
        skips = [
            [enc.fused[2], enc.features[2]],
            [enc.fused[1], enc.features[1]],
            [enc.fused[0], enc.features[0]] if dual else [],
            [enc.stem] if dual else [],
        ]
        x = enc.bottleneck
        for stage, stage_skips in zip(self.decoder, skips):
            x = stage(x, stage_skips)
        return self.head(x)


def build_model(config: ModelConfig) -> PagTransYnet:
    if not isinstance(config, ModelConfig):
        raise ConfigError(f"expected a ModelConfig, got {type(config).__name__}")
    return PagTransYnet(config)


def soft_dice_loss(logits: torch.Tensor, target: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """1 minus the mean per-class soft Dice of the softmax probabilities."""
    num_classes = logits.shape[1]
    probs = logits.softmax(dim=1)
    one_hot = F.one_hot(target, num_classes).permute(0, 3, 1, 2).to(probs.dtype)
    dims = (0, 2, 3)
    intersection = (probs * one_hot).sum(dims)
    cardinality = probs.sum(dims) + one_hot.sum(dims)
    dice = (2.0 * intersection + eps) / (cardinality + eps)
    return 1.0 - dice.mean()


def compute_loss(
    logits: torch.Tensor,
    target: torch.Tensor,
    ce_weight: float = 1.0,
    dice_weight: float = 1.0,
) -> torch.Tensor:
    """Weighted sum of cross-entropy and soft Dice loss."""
    if logits.dim() != 4:
        raise ShapeError(f"logits must be [B,C,H,W], got {logits.dim()} axes")
    if target.shape != (logits.shape[0], *logits.shape[2:]):
        raise ShapeError(
            f"target shape {tuple(target.shape)} does not match logits {tuple(logits.shape)}"
        )
    if target.min() < 0 or target.max() >= logits.shape[1]:
        raise DataError(
            f"target ids must lie in [0, {logits.shape[1]}), "
            f"got range [{int(target.min())}, {int(target.max())}]"
        )
    loss = logits.new_zeros(())
    if ce_weight:
        loss = loss + ce_weight * F.cross_entropy(logits, target)
    if dice_weight:
        loss = loss + dice_weight * soft_dice_loss(logits, target)
    return loss
