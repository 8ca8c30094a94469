"""Checkpoint directories and model construction.

A checkpoint is a directory holding ``manifest.json`` and one tensor file per
parameter (``params/<name>.tnsr``) and per batch-norm buffer
(``buffers/<name>.tnsr``).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..engine import io as tio
from ..engine.tensor import Tensor
from .config import HeadKind, InitStrategy, LstmConfig, ResNetConfig
from .network import Model, init_extractor, init_head, init_lstm, is_extractor_param

FORMAT = "affectrec-checkpoint/1"


class IncompatibleCheckpointError(ValueError):
    def __init__(self, path, names: list[str]):
        self.names = names
        super().__init__(f"checkpoint {path} is incompatible for parameters: {', '.join(names)}")


def save_checkpoint(model: Model, path: str | os.PathLike, metadata: dict | None = None) -> Path:
    path = Path(path)
    (path / "params").mkdir(parents=True, exist_ok=True)
    (path / "buffers").mkdir(parents=True, exist_ok=True)
    for name, t in model.params.items():
        tio.save(path / "params" / f"{name}.tnsr", t.data)
    for name, b in model.buffers.items():
        tio.save(path / "buffers" / f"{name}.tnsr", b)
    manifest = {
        "format": FORMAT,
        "resnet": model.resnet.to_dict(),
        "lstm": model.lstm.to_dict(),
        "head": model.head.value,
        "params": list(model.params),
        "buffers": list(model.buffers),
        "metadata": metadata or {},
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_manifest(path: str | os.PathLike) -> dict:
    return json.loads((Path(path) / "manifest.json").read_text())


def load_checkpoint(path: str | os.PathLike) -> Model:
    path = Path(path)
    manifest = read_manifest(path)
    params = {n: Tensor(tio.load(path / "params" / f"{n}.tnsr"), requires_grad=True) for n in manifest["params"]}
    buffers = {n: tio.load(path / "buffers" / f"{n}.tnsr") for n in manifest["buffers"]}
    return Model(
        ResNetConfig.from_dict(manifest["resnet"]),
        LstmConfig(**manifest["lstm"]),
        HeadKind(manifest["head"]),
        params,
        buffers,
    )


def _load_arrays(path: Path) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    manifest = read_manifest(path)
    params = {n: tio.load(path / "params" / f"{n}.tnsr") for n in manifest["params"]}
    buffers = {n: tio.load(path / "buffers" / f"{n}.tnsr") for n in manifest.get("buffers", [])}
    return params, buffers


def build_model(
    resnet: ResNetConfig,
    lstm: LstmConfig,
    head: HeadKind,
    init: InitStrategy | None = None,
    seed: int = 0,
    dtype=np.float32,
) -> Model:
    """Create a model with Xavier-uniform weights, then apply ``init``.

    Checkpoint strategies overwrite the feature extractor (and the LSTM when
    ``init.load_lstm``) with stored weights; the head always stays freshly
    initialised.
    """
    init = init or InitStrategy()
    if lstm.input_dim != resnet.feature_dim:
        raise ValueError(f"LSTM input {lstm.input_dim} != feature width {resnet.feature_dim}")
    rng = np.random.default_rng(seed)
    params, buffers = init_extractor(resnet, rng)
    params.update(init_lstm(lstm, rng))
    params.update(init_head(lstm.hidden, head, rng))

    if init.kind != "random_xavier":
        src = Path(init.path)
        if not (src / "manifest.json").exists():
            raise FileNotFoundError(f"no checkpoint at {src}")
        stored, stored_buffers = _load_arrays(src)
        wanted = [n for n in params if is_extractor_param(n) or (init.load_lstm and n.startswith("lstm."))]
        bad = [n for n in wanted if n not in stored or stored[n].shape != params[n].shape]
        bad += [n for n in buffers if n not in stored_buffers or stored_buffers[n].shape != buffers[n].shape]
        if bad:
            raise IncompatibleCheckpointError(src, bad)
        for n in wanted:
            params[n] = stored[n]
        for n in buffers:
            buffers[n] = stored_buffers[n].astype(np.float64)

    return Model(
        resnet,
        lstm,
        head,
        {n: Tensor(np.asarray(a, dtype=dtype), requires_grad=True) for n, a in params.items()},
        {n: np.asarray(b, dtype=np.float64) for n, b in buffers.items()},
    )
