"""Model checkpoints: a ``TPRED1`` magic line followed by one JSON document.

The JSON body maps parameter names to ``{"shape": [...], "values": [...]}``
and carries arbitrary metadata (model kind, config, normalizer). Python's
float repr round-trips exactly, so reload is bit-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import CheckpointError

MAGIC = "TPRED1"
FORMAT_VERSION = 1


def pack_state(state: dict[str, np.ndarray]) -> dict[str, dict[str, Any]]:
    return {
        name: {"shape": list(arr.shape), "values": [float(v) for v in np.asarray(arr).reshape(-1)]}
        for name, arr in state.items()
    }


def unpack_state(packed: dict[str, dict[str, Any]]) -> dict[str, np.ndarray]:
    out = {}
    for name, entry in packed.items():
        values = np.asarray(entry["values"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if values.size != int(np.prod(shape)):
            raise CheckpointError(f"{name}: {values.size} values for shape {shape}")
        out[name] = values.reshape(shape)
    return out


def save_checkpoint(path, state: dict[str, np.ndarray], meta: dict[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"format_version": FORMAT_VERSION, "meta": meta or {}, "params": pack_state(state)}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MAGIC + "\n")
        json.dump(body, fh, sort_keys=True)
        fh.write("\n")
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != MAGIC:
            raise CheckpointError(f"{path}: bad magic header {header[:16]!r}")
        try:
            body = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt body ({exc})") from exc
    if body.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {body.get('format_version')}")
    return unpack_state(body["params"]), body.get("meta", {})
