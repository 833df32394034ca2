import pytest
import torch

from pagty.encoder import (
    PvtBranch,
    PvtBranchSpec,
    TriBranchEncoder,
    VitBottleneck,
    VitBottleneckSpec,
    build_pyramid,
)
from pagty.errors import ConfigError, ShapeError

TOY_PVT = PvtBranchSpec(channels=(16, 32, 64, 128), depths=(1, 1, 1, 1), heads=(1, 2, 4, 8))


def toy_encoder(**kwargs):
    defaults = dict(
        in_channels=3,
        input_size=(64, 64),
        base_width=16,
        pvt_spec=TOY_PVT,
        vit_spec=VitBottleneckSpec(token_grid=(4, 4), embed_dim=64, depth=1, heads=2),
    )
    defaults.update(kwargs)
    return TriBranchEncoder(**defaults)


def test_pyramid_halving_schedule_224():
    pyramid = build_pyramid(torch.randn(1, 3, 224, 224))
    assert [tuple(p.shape[-2:]) for p in pyramid.levels] == [
        (112, 112), (56, 56), (28, 28), (14, 14),
    ]


def test_pyramid_halving_schedule_64():
    pyramid = build_pyramid(torch.randn(2, 1, 64, 64))
    assert [tuple(p.shape[-2:]) for p in pyramid.levels] == [
        (32, 32), (16, 16), (8, 8), (4, 4),
    ]
    assert all(p.shape[:2] == (2, 1) for p in pyramid.levels)


def test_pyramid_preserves_constant_images():
    pyramid = build_pyramid(torch.full((1, 3, 32, 32), 0.7))
    for level in pyramid.levels:
        assert torch.allclose(level, torch.full_like(level, 0.7))


def test_pyramid_rejects_indivisible_sizes():
    with pytest.raises(ShapeError):
        build_pyramid(torch.randn(1, 3, 60, 64))


def test_pvt_stage_shapes_at_224():
    spec = PvtBranchSpec(channels=(8, 16, 32, 64), depths=(1, 1, 1, 1), heads=(1, 2, 4, 8))
    branch = PvtBranch(3, spec).eval()
    with torch.no_grad():
        stages = branch(torch.randn(1, 3, 224, 224))
    shapes = [tuple(t.shape) for t in stages.stages]
    assert shapes == [
        (1, 8, 56, 56), (1, 16, 28, 28), (1, 32, 14, 14), (1, 64, 7, 7),
    ]
    assert stages.strides == (4, 8, 16, 32)


def test_pvt_stride_law_toy():
    branch = PvtBranch(3, TOY_PVT).eval()
    with torch.no_grad():
        stages = branch(torch.randn(1, 3, 64, 64))
    for t, stride in zip(stages.stages, stages.strides):
        assert t.shape[-1] * stride == 64
        assert t.shape[-2] * stride == 64


def test_pvt_indivisible_input_rejected():
    branch = PvtBranch(3, TOY_PVT)
    with pytest.raises(ShapeError):
        branch(torch.randn(1, 3, 48, 48))


def test_pvt_forward_is_deterministic():
    branch = PvtBranch(3, TOY_PVT).eval()
    x = torch.randn(1, 3, 64, 64)
    with torch.no_grad():
        a = branch(x)
        b = branch(x)
    for t1, t2 in zip(a.stages, b.stages):
        assert torch.equal(t1, t2)


def test_pvt_channels_must_be_non_decreasing():
    with pytest.raises(ConfigError):
        PvtBranchSpec(channels=(64, 32, 128, 256))


def test_pvt_default_stage_widths():
    spec = PvtBranchSpec()
    assert spec.channels == (64, 128, 320, 512)
    assert spec.sr_ratios == (8, 4, 2, 1)


def test_sra_attention_rows_sum_to_one():
    branch = PvtBranch(3, TOY_PVT).eval()
    for stage in branch.stages:
        for block in stage.blocks:
            block.attn.store_attention = True
    with torch.no_grad():
        branch(torch.randn(1, 3, 64, 64))
    for stage in branch.stages:
        for block in stage.blocks:
            attn = block.attn.last_attention
            rows = attn.sum(dim=-1)
            assert torch.allclose(rows, torch.ones_like(rows), atol=1e-5)


def test_vit_output_width_is_embed_dim():
    spec = VitBottleneckSpec(token_grid=(14, 14), embed_dim=768, depth=1, heads=12)
    vit = VitBottleneck(640, spec).eval()
    with torch.no_grad():
        out = vit(torch.randn(2, 640, 14, 14))
    assert out.shape == (2, 768, 14, 14)
    assert vit.token_count == 196


def test_vit_rejects_wrong_grid():
    vit = VitBottleneck(32, VitBottleneckSpec(token_grid=(4, 4), embed_dim=32, depth=1, heads=2))
    with pytest.raises(ShapeError):
        vit(torch.randn(1, 32, 8, 8))


def test_vit_attention_rows_sum_to_one():
    spec = VitBottleneckSpec(token_grid=(4, 4), embed_dim=32, depth=3, heads=4)
    vit = VitBottleneck(16, spec).eval()
    maps = vit.attention_maps(torch.randn(2, 16, 4, 4))
    assert len(maps) == 3
    for attn in maps:
        assert attn.shape == (2, 4, 16, 16)
        rows = attn.sum(dim=-1)
        assert torch.allclose(rows, torch.ones_like(rows), atol=1e-5)


def test_vit_embed_dim_must_divide_heads():
    with pytest.raises(ConfigError):
        VitBottleneckSpec(embed_dim=30, heads=4)


def test_vit_defaults_are_base_sized():
    spec = VitBottleneckSpec()
    assert spec.embed_dim == 768
    assert spec.depth == 12
    assert spec.heads == 12
    assert spec.token_count == 196


def test_encoder_full_shape_trace_224():
    encoder = TriBranchEncoder(
        in_channels=3,
        input_size=(224, 224),
        base_width=8,
        pvt_spec=PvtBranchSpec(channels=(8, 16, 32, 64), depths=(1, 1, 1, 1), heads=(1, 2, 4, 8)),
        vit_spec=VitBottleneckSpec(token_grid=(14, 14), embed_dim=32, depth=1, heads=2),
    ).eval()
    with torch.no_grad():
        out = encoder(torch.randn(1, 3, 224, 224))
    assert tuple(out.stem.shape) == (1, 8, 224, 224)
    assert [tuple(f.shape) for f in out.features] == [
        (1, 8, 112, 112), (1, 16, 56, 56), (1, 32, 28, 28), (1, 64, 14, 14),
    ]
    assert tuple(out.bottleneck.shape) == (1, 64, 14, 14)


def test_encoder_without_pvt_uses_pyramid_gate_only():
    encoder = toy_encoder(use_pvt=False).eval()
    with torch.no_grad():
        out = encoder(torch.randn(1, 3, 64, 64))
    assert [tuple(f.shape) for f in out.features] == [
        (1, 16, 32, 32), (1, 32, 16, 16), (1, 64, 8, 8), (1, 128, 4, 4),
    ]
    assert encoder.fused_channels == [16, 16, 32, 64]


def test_encoder_without_pyramid_gates_transformer_by_main():
    encoder = toy_encoder(use_pyramid=False).eval()
    with torch.no_grad():
        out = encoder(torch.randn(1, 3, 64, 64))
    assert tuple(out.bottleneck.shape) == (1, 128, 4, 4)
    assert encoder.fused_channels == [16, 32, 64, 128]


def test_encoder_without_vit_bypasses_token_mixing():
    encoder = toy_encoder(use_vit=False).eval()
    assert not hasattr(encoder, "vit")
    with torch.no_grad():
        out = encoder(torch.randn(1, 3, 64, 64))
    assert tuple(out.bottleneck.shape) == (1, 128, 4, 4)


def test_encoder_rejects_disabling_both_gate_branches():
    with pytest.raises(ConfigError):
        toy_encoder(use_pyramid=False, use_pvt=False)


def test_encoder_forward_bit_reproducible():
    encoder = toy_encoder().eval()
    x = torch.randn(1, 3, 64, 64)
    with torch.no_grad():
        a = encoder(x)
        b = encoder(x)
    assert torch.equal(a.bottleneck, b.bottleneck)
    for f1, f2 in zip(a.features, b.features):
        assert torch.equal(f1, f2)


def test_encoder_gradients_reach_all_three_branches():
    encoder = toy_encoder()
    out = encoder(torch.randn(1, 3, 64, 64))
    out.bottleneck.sum().backward()
    groups = {"pyramid_blocks": 0.0, "pvt": 0.0, "vit": 0.0, "stem": 0.0}
    for name, p in encoder.named_parameters():
        assert p.grad is not None, name
        for key in groups:
            if name.startswith(key):
                groups[key] += float(p.grad.abs().sum())
    for key, total in groups.items():
        assert total > 0, f"no gradient signal in {key}"


def test_encoder_rejects_wrong_input_size():
    encoder = toy_encoder()
    with pytest.raises(ShapeError):
        encoder(torch.randn(1, 3, 32, 32))
