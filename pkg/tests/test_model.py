import math

import pytest
import torch

from pagty.errors import ConfigError, DataError, ShapeError
from pagty.model import (
    AblationFlags,
    ModelConfig,
    build_model,
    compute_loss,
    soft_dice_loss,
)


def small_224_config(num_classes=9, **overrides):
    base = dict(
        num_classes=num_classes,
        input_size=(224, 224),
        base_width=8,
        pvt_channels=(8, 16, 32, 64),
        pvt_depths=(1, 1, 1, 1),
        pvt_heads=(1, 2, 4, 8),
        vit={"embed_dim": 32, "depth": 1, "heads": 2, "mlp_ratio": 2.0},
    )
    base.update(overrides)
    return ModelConfig(**base)


def test_toy_model_end_to_end_shape():
    model = build_model(ModelConfig.toy(num_classes=3)).eval()
    with torch.no_grad():
        out = model(torch.randn(1, 3, 64, 64))
    assert out.shape == (1, 3, 64, 64)


def test_multi_organ_output_shape_at_224():
    model = build_model(small_224_config(num_classes=9)).eval()
    with torch.no_grad():
        out = model(torch.randn(2, 3, 224, 224))
    assert out.shape == (2, 9, 224, 224)


def test_three_class_output_shape():
    model = build_model(ModelConfig.toy(num_classes=3)).eval()
    with torch.no_grad():
        out = model(torch.randn(1, 3, 64, 64))
    assert out.shape == (1, 3, 64, 64)
    probs = out.softmax(dim=1).sum(dim=1)
    assert torch.allclose(probs, torch.ones_like(probs), atol=1e-6)


def test_parameter_count_strictly_decreases_per_removed_branch():
    full = build_model(ModelConfig.toy()).param_count()
    for removal in ({"pyr": False}, {"pvt": False}, {"vit": False}):
        flags = AblationFlags(**{"pyr": True, "pvt": True, "vit": True, **removal})
        reduced = build_model(ModelConfig.toy(flags=flags)).param_count()
        assert 0 < reduced < full, f"{removal} did not shrink the model"


def test_all_four_ablation_rows_constructible():
    rows = [
        AblationFlags(pyr=False, pvt=True, vit=True),
        AblationFlags(pyr=True, pvt=False, vit=True),
        AblationFlags(pyr=True, pvt=True, vit=False),
        AblationFlags(pyr=True, pvt=True, vit=True),
    ]
    for flags in rows:
        model = build_model(ModelConfig.toy(flags=flags)).eval()
        with torch.no_grad():
            assert model(torch.randn(1, 3, 64, 64)).shape == (1, 3, 64, 64)


def test_disabling_both_gate_branches_is_config_error():
    with pytest.raises(ConfigError):
        AblationFlags(pyr=False, pvt=False)


def test_disabled_branch_parameters_do_not_exist():
    names_no_pyr = {
        n for n, _ in build_model(ModelConfig.toy(flags=AblationFlags(pyr=False))).named_parameters()
    }
    assert not any("pyramid" in n for n in names_no_pyr)
    names_no_pvt = {
        n for n, _ in build_model(ModelConfig.toy(flags=AblationFlags(pvt=False))).named_parameters()
    }
    assert not any(n.startswith("encoder.pvt.") for n in names_no_pvt)
    names_no_vit = {
        n for n, _ in build_model(ModelConfig.toy(flags=AblationFlags(vit=False))).named_parameters()
    }
    assert not any(n.startswith("encoder.vit.") for n in names_no_vit)


def test_gradient_flow_for_every_flag_row():
    for flags in (
        AblationFlags(),
        AblationFlags(pyr=False),
        AblationFlags(pvt=False),
        AblationFlags(vit=False),
    ):
        model = build_model(ModelConfig.toy(flags=flags))
        loss = compute_loss(model(torch.randn(2, 3, 64, 64)), torch.randint(0, 3, (2, 64, 64)))
        loss.backward()
        for name, p in model.named_parameters():
            assert p.grad is not None, f"{name} has no gradient under {flags}"


def test_two_levels_skip_mode_builds_and_runs():
    model = build_model(ModelConfig.toy(skip_mode="two_levels")).eval()
    with torch.no_grad():
        assert model(torch.randn(1, 3, 64, 64)).shape == (1, 3, 64, 64)


def test_input_size_must_divide_32():
    with pytest.raises(ConfigError, match="input_size"):
        ModelConfig(num_classes=2, input_size=(60, 64))


def test_invalid_class_count_names_field():
    with pytest.raises(ConfigError, match="num_classes"):
        ModelConfig(num_classes=0)


def test_wrong_input_shape_is_shape_error():
    model = build_model(ModelConfig.toy())
    with pytest.raises(ShapeError):
        model(torch.randn(1, 3, 32, 32))


def test_token_grid_follows_input_size():
    config = ModelConfig.toy()
    assert config.vit.token_grid == (4, 4)
    config224 = small_224_config()
    assert config224.vit.token_grid == (14, 14)


def test_config_dict_round_trip():
    config = ModelConfig.toy(num_classes=5, dag_wiring="section33")
    rebuilt = ModelConfig.from_dict(config.to_dict())
    assert rebuilt == config
    with pytest.raises(ConfigError, match="unknown"):
        ModelConfig.from_dict({"num_classes": 2, "bogus": 1})


def test_loss_near_zero_for_peaked_correct_logits():
    target = torch.randint(0, 3, (2, 16, 16))
    logits = torch.full((2, 3, 16, 16), -20.0)
    logits.scatter_(1, target[:, None], 20.0)
    assert float(compute_loss(logits, target)) < 0.01


def test_cross_entropy_term_is_ln2_for_uniform_two_class():
    logits = torch.zeros(1, 2, 8, 8)
    target = torch.zeros(1, 8, 8, dtype=torch.long)
    target[:, ::2] = 1  # balanced
    ce = compute_loss(logits, target, ce_weight=1.0, dice_weight=0.0)
    assert math.isclose(float(ce), math.log(2.0), abs_tol=1e-6)


def test_dice_term_zero_for_one_hot_prediction():
    target = torch.randint(0, 3, (1, 8, 8))
    logits = torch.full((1, 3, 8, 8), -40.0)
    logits.scatter_(1, target[:, None], 40.0)
    assert float(soft_dice_loss(logits, target)) < 1e-5


def test_loss_rejects_out_of_range_target():
    logits = torch.zeros(1, 3, 8, 8)
    bad = torch.full((1, 8, 8), 3, dtype=torch.long)
    with pytest.raises(DataError):
        compute_loss(logits, bad)


def test_loss_is_finite_for_random_inputs():
    logits = torch.randn(2, 4, 16, 16) * 50
    target = torch.randint(0, 4, (2, 16, 16))
    assert math.isfinite(float(compute_loss(logits, target)))


def test_overfit_capacity_on_single_repeated_batch():
    # fusion wiring sanity: the full toy model must memorize one batch
    torch.manual_seed(0)
    model = build_model(ModelConfig.toy(num_classes=3))
    x = torch.randn(4, 3, 64, 64)
    y = torch.randint(0, 3, (4, 64, 64))
    optimizer = torch.optim.Adam(model.parameters(), lr=3e-3)
    final = float("inf")
    for _ in range(200):
        optimizer.zero_grad()
        loss = compute_loss(model(x), y)
        loss.backward()
        optimizer.step()
        final = float(loss.detach())
        if final < 0.05:
            break
    assert final < 0.05, f"loss stuck at {final}"
