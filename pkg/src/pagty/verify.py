"""Self-contained invariant suite behind the ``pagty verify`` subcommand.

Each check prints one PASS/FAIL line; the suite returns the failure count.
Checks use independent oracles (closed-form counts, all-pairs distance
scans, analytic constructions) rather than re-running library code paths.
"""

import itertools
import tempfile
from pathlib import Path

import numpy as np
import torch

from .blocks import DConvBSpec, ResidualDoubleConv
from .checkpoint import load_checkpoint, save_checkpoint
from .data import make_folds
from .data.records import SampleRecord
from .encoder import build_pyramid
from .gates import AttentionGate
from .metrics import dice, hd95, iou
from .model import AblationFlags, ModelConfig, build_model


def _brute_force_hd95(pred, gt):
    a = np.argwhere(pred)
    b = np.argwhere(gt)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1).astype(np.float64))
    pooled = np.concatenate([d.min(axis=1), d.min(axis=0)])
    return float(np.percentile(pooled, 95, method="linear"))


def check_block_shapes_and_params():
    torch.manual_seed(0)
    block = ResidualDoubleConv(3, 16)
    out = block(torch.randn(2, 3, 32, 32))
    assert out.shape == (2, 16, 32, 32), f"bad output shape {tuple(out.shape)}"
    counted = sum(p.numel() for p in block.parameters())
    assert counted == DConvBSpec(3, 16).param_count() == 2896, f"param count {counted}"


def check_residual_bypass():
    torch.manual_seed(0)
    block = ResidualDoubleConv(4, 8).eval()
    with torch.no_grad():
        block.norm2.weight.zero_()
        block.norm2.bias.zero_()
        x = torch.randn(1, 4, 16, 16)
        expected = torch.relu(block.skip(x))
        assert torch.equal(block(x), expected), "bypass output differs from ReLU(skip)"


def check_gate_bounds():
    torch.manual_seed(0)
    gate = AttentionGate(8, 8)
    with torch.no_grad():
        for _ in range(100):
            g, x = torch.randn(2, 8, 14, 14), torch.randn(2, 8, 14, 14)
            alpha = gate.coefficients(g, x)
            assert float(alpha.min()) > 0 and float(alpha.max()) < 1, "alpha left (0,1)"
    with torch.no_grad():
        gate.psi.weight.zero_()
        gate.psi.bias.zero_()
        x = torch.randn(2, 8, 14, 14)
        out = gate(torch.randn(2, 8, 14, 14), x)
        assert torch.allclose(out, 0.5 * x, atol=1e-6), "zero-psi gate is not 0.5*x"


def check_pyramid_halving():
    image = torch.full((1, 3, 64, 64), 0.25)
    pyramid = build_pyramid(image)
    sizes = [tuple(level.shape[-2:]) for level in pyramid.levels]
    assert sizes == [(32, 32), (16, 16), (8, 8), (4, 4)], f"bad pyramid sizes {sizes}"
    for level in pyramid.levels:
        assert torch.allclose(level, torch.full_like(level, 0.25)), "constant not preserved"


def check_model_shapes_and_gradients():
    torch.manual_seed(0)
    for flags in (AblationFlags(), AblationFlags(pyr=False), AblationFlags(pvt=False),
                  AblationFlags(vit=False)):
        config = ModelConfig.toy(num_classes=3, flags=flags)
        model = build_model(config)
        logits = model(torch.randn(1, 3, 64, 64))
        assert logits.shape == (1, 3, 64, 64), f"bad logits shape {tuple(logits.shape)}"
        logits.sum().backward()
        for name, p in model.named_parameters():
            assert p.grad is not None, f"no gradient for {name} under {flags}"


def check_vit_token_count():
    config = ModelConfig(
        num_classes=2, input_size=(224, 224), base_width=8,
        pvt_channels=(8, 16, 32, 64), pvt_depths=(1, 1, 1, 1), pvt_heads=(1, 2, 4, 8),
        vit={"embed_dim": 32, "depth": 1, "heads": 2, "mlp_ratio": 2.0},
    )
    model = build_model(config)
    assert model.encoder.vit.token_count == 196, "224 input must give 196 tokens"
    assert model.encoder.vit.spec.token_grid == (14, 14)


def check_metric_oracles():
    rng = np.random.default_rng(11)
    for _ in range(25):
        shape = (int(rng.integers(4, 17)), int(rng.integers(4, 17)))
        pred = rng.random(shape) < 0.3
        gt = rng.random(shape) < 0.3
        if not pred.any() or not gt.any():
            continue
        assert hd95(pred, gt) == _brute_force_hd95(pred, gt), "hd95 != brute force"
        d, j = dice(pred, gt), iou(pred, gt)
        assert abs(j - d / (2 - d)) < 1e-12, "iou/dice identity broken"
    cells = list(itertools.product([0, 1], repeat=4))
    for a in cells:
        for b in cells:
            pred = np.array(a, dtype=bool).reshape(2, 2)
            gt = np.array(b, dtype=bool).reshape(2, 2)
            inter = int((pred & gt).sum())
            total = int(pred.sum() + gt.sum())
            expected = 1.0 if total == 0 else 2 * inter / total
            assert dice(pred, gt) == expected, "dice differs from counting"


def check_checkpoint_roundtrip():
    torch.manual_seed(0)
    model = build_model(ModelConfig.toy()).eval()
    x = torch.randn(1, 3, 64, 64)
    with torch.no_grad():
        before = model(x)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "m.ckpt"
        save_checkpoint(path, model, epoch=3)
        rebuilt = load_checkpoint(path).build().eval()
    with torch.no_grad():
        after = rebuilt(x)
    assert torch.equal(before, after), "forward differs after checkpoint round trip"


def check_fold_sizes():
    records = [
        SampleRecord(Path(f"i{i}.png"), Path(f"m{i}.png"), group_id=f"g{i}")
        for i in range(23)
    ]
    folds = make_folds(records, k=5, runs=1, seed=0)[0]
    assert sorted(len(f) for f in folds) == [4, 4, 5, 5, 5], "23 groups must split 5,5,5,4,4"


CHECKS = [
    ("block shapes and closed-form parameter count", check_block_shapes_and_params),
    ("residual bypass exactness", check_residual_bypass),
    ("attention gate coefficient bounds", check_gate_bounds),
    ("pyramid halving and constant preservation", check_pyramid_halving),
    ("model shapes and gradient flow per flag row", check_model_shapes_and_gradients),
    ("196-token bottleneck at 224 input", check_vit_token_count),
    ("metric oracle equivalence", check_metric_oracles),
    ("checkpoint round trip", check_checkpoint_roundtrip),
    ("grouped fold sizes", check_fold_sizes),
]


def run_verification(stream=None) -> int:
    """Run all checks; returns the number of failures."""
    import sys

    stream = stream or sys.stdout
    failures = 0
    for name, check in CHECKS:
        try:
            check()
        except Exception as e:  # noqa: BLE001 - report every failure mode
            failures += 1
            stream.write(f"FAIL {name}: {e}\n")
        else:
            stream.write(f"PASS {name}\n")
    stream.write(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed\n")
    return failures
