import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _seed_everything():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture
def synthetic_dataset(tmp_path):
    """A small deterministic shapes dataset plus its scanned records."""
    from pagty.data import SyntheticSpec, generate_synthetic, scan_dataset

    root = generate_synthetic(SyntheticSpec(n_images=8, seed=3), tmp_path / "data")
    return scan_dataset(root)
