import numpy as np
import pytest
import torch

from pagty.checkpoint import load_checkpoint, save_checkpoint
from pagty.errors import DataError
from pagty.model import ModelConfig, build_model


def test_forward_outputs_bit_exact_after_round_trip(tmp_path):
    model = build_model(ModelConfig.toy()).eval()
    x = torch.randn(1, 3, 64, 64)
    with torch.no_grad():
        before = model(x)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, epoch=7)
    ckpt = load_checkpoint(path)
    assert ckpt.epoch == 7
    rebuilt = ckpt.build().eval()
    with torch.no_grad():
        after = rebuilt(x)
    assert torch.equal(before, after)


def test_save_load_save_produces_identical_bytes(tmp_path):
    model = build_model(ModelConfig.toy())
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)
    first = tmp_path / "a.ckpt"
    second = tmp_path / "b.ckpt"
    save_checkpoint(first, model, optimizer, epoch=2)
    rebuilt = load_checkpoint(first).build()
    save_checkpoint(second, rebuilt, optimizer, epoch=2)
    assert first.read_bytes() == second.read_bytes()


def test_parameters_round_trip_exactly(tmp_path):
    model = build_model(ModelConfig.toy())
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, epoch=0)
    ckpt = load_checkpoint(path)
    state = model.state_dict()
    assert set(ckpt.parameters) == set(state)
    for name, tensor in state.items():
        np.testing.assert_array_equal(ckpt.parameters[name], tensor.numpy())


def test_config_survives_round_trip(tmp_path):
    config = ModelConfig.toy(num_classes=4, dag_wiring="section33")
    model = build_model(config)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, epoch=1)
    assert load_checkpoint(path).config == config


def test_unreadable_checkpoint_is_data_error(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a zip archive")
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_missing_checkpoint_is_data_error(tmp_path):
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "absent.ckpt")
