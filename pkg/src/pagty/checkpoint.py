"""Checkpoint container: a zip archive with a stable, documented layout.

Entries (all with fixed timestamps so identical content gives identical
bytes):

    config.json        canonical JSON of the model configuration
    meta.json          {"format": 1, "epoch": <int>}
    params/<name>.npy  every state-dict entry as a portable numpy array
    optimizer.bin      opaque optimizer state blob (may be empty)
    rng.bin            opaque RNG state blob (may be empty)

Parameter arrays round-trip bit-exactly: save -> load -> save produces
identical bytes for the params/ entries.
"""

import io
import json
import pickle
import zipfile
from dataclasses import dataclass

import numpy as np
import torch

from .errors import DataError
from .model import ModelConfig, PagTransYnet, build_model

FORMAT_VERSION = 1
_EPOCH_STAMP = (1980, 1, 1, 0, 0, 0)


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


@dataclass
class Checkpoint:
    config: ModelConfig
    parameters: dict[str, np.ndarray]
    optimizer_state: bytes
    epoch: int
    rng_state: bytes

    def build(self) -> PagTransYnet:
        """Construct a model and load the stored state into it."""
        model = build_model(self.config)
        state = {k: torch.from_numpy(v.copy()) for k, v in self.parameters.items()}
        model.load_state_dict(state)
        return model


def _npy_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, array, version=(1, 0))
    return buf.getvalue()


def _write(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH_STAMP)
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, payload)


def capture_rng_state() -> bytes:
    return pickle.dumps({"torch": torch.get_rng_state(), "numpy": np.random.get_state()})


def restore_rng_state(blob: bytes) -> None:
    if not blob:
        return
    state = pickle.loads(blob)
    torch.set_rng_state(state["torch"])
    np.random.set_state(state["numpy"])


def save_checkpoint(
    path,
    model: PagTransYnet,
    optimizer=None,
    epoch: int = 0,
    rng_state: bytes | None = None,
) -> None:
    params = {
        name: tensor.detach().cpu().numpy()
        for name, tensor in model.state_dict().items()
    }
    optim_blob = b""
    if optimizer is not None:
        buf = io.BytesIO()
        torch.save(optimizer.state_dict(), buf)
        optim_blob = buf.getvalue()

    with zipfile.ZipFile(path, "w") as zf:
        _write(zf, "config.json", canonical_json(model.config.to_dict()).encode())
        _write(zf, "meta.json", canonical_json({"format": FORMAT_VERSION, "epoch": int(epoch)}).encode())
        for name in sorted(params):
            _write(zf, f"params/{name}.npy", _npy_bytes(params[name]))
        _write(zf, "optimizer.bin", optim_blob)
        _write(zf, "rng.bin", rng_state or b"")


def load_checkpoint(path) -> Checkpoint:
    try:
        zf = zipfile.ZipFile(path, "r")
    except (OSError, zipfile.BadZipFile) as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    with zf:
        names = set(zf.namelist())
        for required in ("config.json", "meta.json"):
            if required not in names:
                raise DataError(f"checkpoint {path} is missing {required}")
        config = ModelConfig.from_dict(json.loads(zf.read("config.json")))
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != FORMAT_VERSION:
            raise DataError(f"unsupported checkpoint format {meta.get('format')!r}")
        params = {}
        for name in sorted(names):
            if name.startswith("params/") and name.endswith(".npy"):
                key = name[len("params/") : -len(".npy")]
                params[key] = np.lib.format.read_array(io.BytesIO(zf.read(name)))
        optim = zf.read("optimizer.bin") if "optimizer.bin" in names else b""
        rng = zf.read("rng.bin") if "rng.bin" in names else b""
    return Checkpoint(
        config=config,
        parameters=params,
        optimizer_state=optim,
        epoch=int(meta["epoch"]),
        rng_state=rng,
    )
