"""Model files: one JSON header line followed by a little-endian float64 blob."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import Model, layer_from_spec

MAGIC = "conceptbp-model/1"


def model_to_bytes(model: Model) -> bytes:
    names = sorted(model.params)
    header = {
        "format": MAGIC,
        "seed": int(model.seed),
        "input_shape": list(model.input_shape),
        "layers": [layer.spec() for layer in model.layers],
        "taps": model.layer_taps,
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "meta": model.meta,
    }
    blob = b"".join(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes() for n in names)
    return json.dumps(header, sort_keys=True).encode() + b"\n" + blob


def model_from_bytes(raw: bytes) -> Model:
    head, _, blob = raw.partition(b"\n")
    header = json.loads(head)
    if header.get("format") != MAGIC:
        raise ValueError(f"not a model file (format {header.get('format')!r})")
    params = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        params[entry["name"]] = arr.astype(np.float64).reshape(shape)
        offset += 8 * count
    if offset != len(blob):
        raise ValueError(f"parameter blob has {len(blob) - offset} trailing bytes")
    layers = [layer_from_spec(s) for s in header["layers"]]
    return Model(layers, params, header["seed"], tuple(header["input_shape"]), header.get("meta", {}))


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path: str | Path) -> Model:
    return model_from_bytes(Path(path).read_bytes())
