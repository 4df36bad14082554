"""Versioned JSON checkpoint: parameter name -> shape + flat float data,
with a header carrying the model config and RNG seed."""

from __future__ import annotations

import json

import numpy as np

from .errors import DataError
from .tensor import Tensor

FORMAT_VERSION = 1


def save_checkpoint(path, params: dict[str, Tensor], header: dict) -> None:
    payload = {
        "version": FORMAT_VERSION,
        "header": header,
        "params": {
            name: {"shape": list(p.shape), "data": p.data.astype(np.float64).reshape(-1).tolist()}
            for name, p in params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: not a valid checkpoint: {e}") from e
    if payload.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    arrays = {}
    for name, rec in payload["params"].items():
        arr = np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
        arrays[name] = arr
    return payload["header"], arrays
