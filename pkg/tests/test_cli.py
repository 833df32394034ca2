import json

import numpy as np
import pytest
from PIL import Image

from pagty.cli import main
from pagty.configio import dump_configs, load_configs
from pagty.data import load_mask
from pagty.errors import ConfigError
from pagty.model import ModelConfig
from pagty.training import TrainConfig


@pytest.fixture
def config_file(tmp_path):
    model = ModelConfig.toy()
    train = TrainConfig(epochs=2, lr=1e-3, batch_size=4, seed=0)
    path = tmp_path / "config.json"
    path.write_text(dump_configs(model, train))
    return path


def test_gen_synthetic_writes_dataset(tmp_path):
    out = tmp_path / "data"
    assert main(["gen-synthetic", "--out-dir", str(out), "--n-images", "4"]) == 0
    assert len(list((out / "images").iterdir())) == 4
    assert len(list((out / "masks").iterdir())) == 4


def test_gen_synthetic_refuses_existing_dir(tmp_path, capsys):
    out = tmp_path / "data"
    main(["gen-synthetic", "--out-dir", str(out), "--n-images", "2"])
    assert main(["gen-synthetic", "--out-dir", str(out), "--n-images", "2"]) == 3
    assert "not empty" in capsys.readouterr().err


def test_train_eval_predict_round_trip(tmp_path, config_file, capsys):
    data = tmp_path / "data"
    main(["gen-synthetic", "--out-dir", str(data), "--n-images", "8"])
    run_dir = tmp_path / "run"
    code = main([
        "train", "--config", str(config_file), "--data", str(data),
        "--out-dir", str(run_dir),
    ])
    assert code == 0
    assert (run_dir / "best.ckpt").exists() and (run_dir / "last.ckpt").exists()

    eval_dir = tmp_path / "eval"
    code = main([
        "eval", "--checkpoint", str(run_dir / "last.ckpt"), "--data", str(data),
        "--out-dir", str(eval_dir),
    ])
    assert code == 0
    csv_lines = (eval_dir / "metrics.csv").read_text().splitlines()
    assert csv_lines[0] == "class,dsc,iou,f1,hd95"

    image = sorted((data / "images").iterdir())[0]
    pred_dir = tmp_path / "pred"
    code = main([
        "predict", "--checkpoint", str(run_dir / "last.ckpt"), "--image", str(image),
        "--out-dir", str(pred_dir),
    ])
    assert code == 0
    mask = load_mask(pred_dir / f"{image.stem}_mask.png")
    assert set(np.unique(mask)) <= {0, 1, 2}


def test_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"num_classes": 0}}))
    code = main(["train", "--config", str(bad), "--data", str(tmp_path)])
    assert code == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_data_exits_3(tmp_path, config_file, capsys):
    code = main(["train", "--config", str(config_file), "--data", str(tmp_path / "nope")])
    assert code == 3
    assert "data error" in capsys.readouterr().err


def test_eval_with_wrong_class_count_exits_3(tmp_path, config_file, capsys):
    data = tmp_path / "data"
    main(["gen-synthetic", "--out-dir", str(data), "--n-images", "4", "--classes", "5"])
    run_dir = tmp_path / "run"
    ok_data = tmp_path / "ok"
    main(["gen-synthetic", "--out-dir", str(ok_data), "--n-images", "4"])
    assert main([
        "train", "--config", str(config_file), "--data", str(ok_data),
        "--out-dir", str(run_dir),
    ]) == 0
    code = main([
        "eval", "--checkpoint", str(run_dir / "last.ckpt"), "--data", str(data),
    ])
    assert code == 3


def test_verify_subcommand_passes(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_show_config_round_trips(config_file, capsys):
    assert main(["show-config", "--config", str(config_file)]) == 0
    printed = capsys.readouterr().out
    assert json.loads(printed)["model"]["num_classes"] == 3


def test_config_loader_errors(tmp_path):
    with pytest.raises(ConfigError, match="missing the 'model'"):
        path = tmp_path / "empty.json"
        path.write_text("{}")
        load_configs(path)
    with pytest.raises(ConfigError, match="valid JSON"):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        load_configs(path)


def test_seed_override_applies(tmp_path, config_file):
    _, train = load_configs(config_file)
    assert train.seed == 0
    from pagty.cli import build_parser, _apply_overrides

    args = build_parser().parse_args(
        ["train", "--config", str(config_file), "--data", "x", "--seed", "11"]
    )
    assert _apply_overrides(train, args).seed == 11
