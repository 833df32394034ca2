"""Additive attention gating and the dual-gate fusion of the three branches.

``AttentionGate`` rescales a feature tensor by a single-channel sigmoid map
computed from a gating signal.  ``DualAttentionGate`` runs two such gates at
one encoder level: the pyramid features gate the main-branch features, and
the main-branch features gate the transformer features; both gated outputs
are concatenated along channels.
"""

import warnings
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeError

DAG_WIRINGS = ("intro", "section33")


def default_inter_channels(feat_channels: int) -> int:
    return max(feat_channels // 2, 8)


@dataclass(frozen=True)
class AttentionGateSpec:
    gate_channels: int
    feat_channels: int
    inter_channels: int = 0  # 0 selects max(feat_channels // 2, 8)

    def __post_init__(self):
        if self.gate_channels < 1 or self.feat_channels < 1:
            raise ConfigError("gate and feature channel counts must be >= 1")
        if self.inter_channels == 0:
            object.__setattr__(
                self, "inter_channels", default_inter_channels(self.feat_channels)
            )
        if self.inter_channels < 1:
            raise ConfigError("inter_channels must be >= 1")


def resample_to(x: torch.Tensor, target: tuple[int, int]) -> torch.Tensor:
    """Bring a feature map to ``target`` spatial size.

    Identity when already there (bit-exact), max pooling when shrinking by an
    integer factor, bilinear interpolation otherwise (a warning is emitted
    for non-integer shrink factors).
    """
    h, w = x.shape[-2], x.shape[-1]
    th, tw = target
    if (h, w) == (th, tw):
        return x
    if h >= th and w >= tw:
        if h % th == 0 and w % tw == 0:
            return F.max_pool2d(x, kernel_size=(h // th, w // tw))
        warnings.warn(
            f"shrinking {h}x{w} -> {th}x{tw} is not an integer pooling factor; "
            "falling back to bilinear interpolation",
            stacklevel=2,
        )
    return F.interpolate(x, size=target, mode="bilinear", align_corners=False)


class AttentionGate(nn.Module):
    """alpha = sigmoid(psi(relu(W_g g + W_x x + b))); output = x * alpha.

    All projections are 1x1 convolutions without normalization, so the gate
    map is an exact sigmoid of an affine combination: zeroing psi forces
    alpha == 0.5 everywhere, and alpha stays strictly inside (0, 1) for any
    finite input.
    """

    def __init__(self, gate_channels: int, feat_channels: int, inter_channels: int = 0):
        super().__init__()
        self.spec = AttentionGateSpec(gate_channels, feat_channels, inter_channels)
        inter = self.spec.inter_channels
        self.project_gate = nn.Conv2d(gate_channels, inter, kernel_size=1, bias=False)
        self.project_feat = nn.Conv2d(feat_channels, inter, kernel_size=1, bias=True)
        self.psi = nn.Conv2d(inter, 1, kernel_size=1, bias=True)

    def coefficients(self, g: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        """The single-channel gating map alpha for (g, x)."""
        if g.shape[0] != x.shape[0]:
            raise ShapeError(f"batch mismatch: gate {g.shape[0]} vs features {x.shape[0]}")
        if g.shape[-2:] != x.shape[-2:]:
            raise ShapeError(
                f"gate {tuple(g.shape[-2:])} and features {tuple(x.shape[-2:])} "
                "must share spatial size; resample before gating"
            )
        logits = self.psi(F.relu(self.project_gate(g) + self.project_feat(x)))
        return torch.sigmoid(logits)

    def forward(self, g: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        return x * self.coefficients(g, x)


@dataclass(frozen=True)
class DualAttentionGateSpec:
    pyramid_channels: int
    main_channels: int
    transformer_channels: int
    target_resolution: tuple[int, int]
    wiring: str = "intro"

    def __post_init__(self):
        if self.wiring not in DAG_WIRINGS:
            raise ConfigError(f"unknown dag wiring {self.wiring!r}, expected {DAG_WIRINGS}")
        for name in ("pyramid_channels", "main_channels", "transformer_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def out_channels(self) -> int:
        if self.wiring == "intro":
            return self.main_channels + self.transformer_channels
        # section33 gates the main features twice, so both halves carry them
        return 2 * self.main_channels


class DualAttentionGate(nn.Module):
    """Fuse pyramid, main-branch and transformer features at one resolution.

    Default wiring: gate 1 uses the pyramid features as signal over the main
    features; gate 2 uses the main features as signal over the transformer
    features.  The alternative ``section33`` wiring gates the main features
    by the transformer signal and by the pyramid signal instead.  The raw
    concatenation is emitted; channel mixing is left to the following
    double-conv block.
    """

    def __init__(self, spec: DualAttentionGateSpec):
        super().__init__()
        self.spec = spec
        if spec.wiring == "intro":
            self.gate_a = AttentionGate(spec.pyramid_channels, spec.main_channels)
            self.gate_b = AttentionGate(spec.main_channels, spec.transformer_channels)
        else:
            self.gate_a = AttentionGate(spec.transformer_channels, spec.main_channels)
            self.gate_b = AttentionGate(spec.pyramid_channels, spec.main_channels)

    @property
    def out_channels(self) -> int:
        return self.spec.out_channels

    def forward(
        self, pyr: torch.Tensor, main: torch.Tensor, trans: torch.Tensor
    ) -> torch.Tensor:
        if not (pyr.shape[0] == main.shape[0] == trans.shape[0]):
            raise ShapeError(
                f"batch sizes differ: pyramid {pyr.shape[0]}, main {main.shape[0]}, "
                f"transformer {trans.shape[0]}"
            )
        target = self.spec.target_resolution
        pyr = resample_to(pyr, target)
        main = resample_to(main, target)
        trans = resample_to(trans, target)
        if self.spec.wiring == "intro":
            gated_main = self.gate_a(pyr, main)
            gated_trans = self.gate_b(main, trans)
            return torch.cat([gated_main, gated_trans], dim=1)
        by_trans = self.gate_a(trans, main)
        by_pyr = self.gate_b(pyr, main)
        return torch.cat([by_trans, by_pyr], dim=1)
