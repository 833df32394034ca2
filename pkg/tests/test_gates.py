import numpy as np
import pytest
import torch

from pagty.errors import ConfigError, ShapeError
from pagty.gates import (
    AttentionGate,
    AttentionGateSpec,
    DualAttentionGate,
    DualAttentionGateSpec,
    resample_to,
)
from oracles import window_max_pool


def make_dag(pyr=64, main=64, trans=64, target=(28, 28), wiring="intro"):
    return DualAttentionGate(
        DualAttentionGateSpec(
            pyramid_channels=pyr,
            main_channels=main,
            transformer_channels=trans,
            target_resolution=target,
            wiring=wiring,
        )
    )


def test_gate_preserves_feature_shape():
    gate = AttentionGate(64, 64)
    out = gate(torch.randn(2, 64, 28, 28), torch.randn(2, 64, 28, 28))
    assert out.shape == (2, 64, 28, 28)


def test_zero_psi_gives_half_of_features():
    gate = AttentionGate(8, 8)
    with torch.no_grad():
        gate.psi.weight.zero_()
        gate.psi.bias.zero_()
    x = torch.randn(2, 8, 14, 14)
    out = gate(torch.randn(2, 8, 14, 14), x)
    assert torch.allclose(out, 0.5 * x, atol=1e-6)


def test_coefficients_strictly_inside_unit_interval():
    gate = AttentionGate(8, 12)
    with torch.no_grad():
        for _ in range(100):
            g = torch.randn(2, 8, 10, 10) * 3
            x = torch.randn(2, 12, 10, 10) * 3
            alpha = gate.coefficients(g, x)
            assert alpha.min() > 0 and alpha.max() < 1
            out = gate(g, x)
            assert out.abs().max() <= x.abs().max() + 1e-7


def test_bias_offsets_drive_gate_to_extremes():
    gate = AttentionGate(8, 8)
    g, x = torch.randn(1, 8, 12, 12), torch.randn(1, 8, 12, 12)
    with torch.no_grad():
        gate.psi.bias.fill_(20.0)
        near_x = gate(g, x)
        gate.psi.bias.fill_(-20.0)
        near_zero = gate(g, x)
    assert torch.allclose(near_x, x, atol=1e-4)
    assert near_zero.abs().max() < 1e-4


def test_spatial_mismatch_raises():
    gate = AttentionGate(8, 8)
    with pytest.raises(ShapeError):
        gate(torch.randn(1, 8, 12, 12), torch.randn(1, 8, 24, 24))


def test_inter_channels_default():
    assert AttentionGateSpec(32, 64).inter_channels == 32
    assert AttentionGateSpec(32, 4).inter_channels == 8


def test_dag_channel_concat_at_target_resolution():
    dag = make_dag()
    out = dag(
        torch.randn(1, 64, 28, 28), torch.randn(1, 64, 56, 56), torch.randn(1, 64, 28, 28)
    )
    assert out.shape == (1, 128, 28, 28)


def test_dag_zero_inputs_give_zero_output():
    dag = make_dag(target=(14, 14))
    with torch.no_grad():
        out = dag(
            torch.zeros(1, 64, 14, 14), torch.zeros(1, 64, 28, 28), torch.zeros(1, 64, 14, 14)
        )
    assert torch.equal(out, torch.zeros_like(out))


def test_dag_mixed_resolution_example_pools_transformer_branch():
    # 128 + 160 channels at (14, 14); the 28x28 transformer map must be
    # max-pooled 2x, checked against an explicit window-max oracle
    dag = make_dag(pyr=32, main=128, trans=160, target=(14, 14))
    trans = torch.randn(1, 160, 28, 28)
    out = dag(torch.randn(1, 32, 14, 14), torch.randn(1, 128, 14, 14), trans)
    assert out.shape == (1, 288, 14, 14)

    pooled = resample_to(trans, (14, 14))
    expected = window_max_pool(trans.numpy(), 2)
    np.testing.assert_array_equal(pooled.numpy(), expected)


def test_dag_section33_wiring_gates_main_twice():
    dag = make_dag(pyr=32, main=48, trans=64, target=(14, 14), wiring="section33")
    out = dag(
        torch.randn(1, 32, 14, 14), torch.randn(1, 48, 14, 14), torch.randn(1, 64, 14, 14)
    )
    assert out.shape == (1, 96, 14, 14)
    assert dag.spec.out_channels == 96


def test_dag_batch_mismatch_raises():
    dag = make_dag()
    with pytest.raises(ShapeError):
        dag(torch.randn(1, 64, 28, 28), torch.randn(2, 64, 28, 28), torch.randn(1, 64, 28, 28))


def test_dag_gradients_reach_all_three_inputs():
    dag = make_dag(pyr=8, main=8, trans=8, target=(8, 8))
    pyr = torch.randn(1, 8, 8, 8, requires_grad=True)
    main = torch.randn(1, 8, 16, 16, requires_grad=True)
    trans = torch.randn(1, 8, 4, 4, requires_grad=True)
    dag(pyr, main, trans).sum().backward()
    for tensor in (pyr, main, trans):
        assert tensor.grad is not None
        assert tensor.grad.abs().sum() > 0


def test_resample_identity_is_bit_exact():
    x = torch.randn(2, 5, 14, 14)
    assert resample_to(x, (14, 14)) is x


def test_resample_non_integer_shrink_warns():
    x = torch.randn(1, 3, 15, 15)
    with pytest.warns(UserWarning, match="integer pooling"):
        out = resample_to(x, (10, 10))
    assert out.shape == (1, 3, 10, 10)


def test_resample_upsamples_bilinearly():
    x = torch.ones(1, 2, 7, 7)
    out = resample_to(x, (14, 14))
    assert out.shape == (1, 2, 14, 14)
    assert torch.allclose(out, torch.ones_like(out))


def test_bad_wiring_rejected():
    with pytest.raises(ConfigError):
        DualAttentionGateSpec(8, 8, 8, (4, 4), wiring="sideways")
