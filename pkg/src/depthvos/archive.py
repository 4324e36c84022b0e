"""Portable named-array archive used for checkpoints and frozen backbones.

Layout on disk: a directory holding ``index.json`` mapping each array name to
``{"dtype": "f32", "shape": [...], "file": ..., "byte_offset": ..., "byte_len": ...}``
plus raw little-endian float32 blobs. Arrays are serialized channel-major,
row-major within channel (C order), matching the in-memory contract. Round
trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np
import torch

INDEX_NAME = "index.json"
BLOB_NAME = "weights.bin"


class ArchiveError(RuntimeError):
    """Raised for missing, malformed, or inconsistent archives."""


def save_archive(path, arrays: Mapping[str, "np.ndarray | torch.Tensor"]) -> None:
    """Write ``arrays`` to a fresh archive directory at ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    index: dict[str, dict] = {}
    offset = 0
    blob_path = root / BLOB_NAME
    with open(blob_path, "wb") as blob:
        for name in sorted(arrays):
            a = arrays[name]
            if isinstance(a, torch.Tensor):
                a = a.detach().cpu().numpy()
            a = np.ascontiguousarray(a, dtype="<f4")
            raw = a.tobytes()
            index[name] = {
                "dtype": "f32",
                "shape": list(a.shape),
                "file": BLOB_NAME,
                "byte_offset": offset,
                "byte_len": len(raw),
            }
            blob.write(raw)
            offset += len(raw)
    with open(root / INDEX_NAME, "w") as f:
        json.dump(index, f, indent=1, sort_keys=True)


def load_archive(path, expected: Mapping[str, tuple] | None = None) -> dict[str, np.ndarray]:
    """Read an archive back into ``{name: float32 array}``.

    When ``expected`` (name -> shape) is given, every expected array must be
    present with that exact shape and no unknown names may appear; errors
    identify the offending array by name.
    """
    root = Path(path)
    index_path = root / INDEX_NAME
    if not index_path.is_file():
        raise ArchiveError(f"no archive at {root} (missing {INDEX_NAME})")
    try:
        with open(index_path) as f:
            index = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ArchiveError(f"corrupt archive index {index_path}: {e}") from e
    if not isinstance(index, dict):
        raise ArchiveError(f"corrupt archive index {index_path}: not an object")

    if expected is not None:
        missing = sorted(set(expected) - set(index))
        if missing:
            raise ArchiveError(f"archive {root} is missing required array '{missing[0]}'")
        unknown = sorted(set(index) - set(expected))
        if unknown:
            raise ArchiveError(f"archive {root} contains unknown array '{unknown[0]}'")

    blobs: dict[str, bytes] = {}
    out: dict[str, np.ndarray] = {}
    for name, entry in index.items():
        try:
            dtype = entry["dtype"]
            shape = tuple(int(s) for s in entry["shape"])
            fname = entry["file"]
            off = int(entry["byte_offset"])
            length = int(entry["byte_len"])
        except (KeyError, TypeError, ValueError) as e:
            raise ArchiveError(f"corrupt index entry for '{name}': {e}") from e
        if dtype != "f32":
            raise ArchiveError(f"array '{name}' has unsupported dtype {dtype!r}")
        n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if length != 4 * n_items:
            raise ArchiveError(
                f"array '{name}' declares {length} bytes but shape {shape} needs {4 * n_items}"
            )
        if fname not in blobs:
            fpath = root / fname
            if not fpath.is_file():
                raise ArchiveError(f"archive blob {fname} for array '{name}' is missing")
            blobs[fname] = fpath.read_bytes()
        raw = blobs[fname]
        if off + length > len(raw):
            raise ArchiveError(
                f"archive blob {fname} truncated: array '{name}' ends at byte "
                f"{off + length} but the file has {len(raw)}"
            )
        arr = np.frombuffer(raw, dtype="<f4", count=n_items, offset=off).reshape(shape)
        if expected is not None and tuple(expected[name]) != shape:
            raise ArchiveError(
                f"array '{name}' has shape {shape}, expected {tuple(expected[name])}"
            )
        out[name] = arr.copy()
    return out


def save_state_dict(path, state: Mapping[str, torch.Tensor]) -> None:
    save_archive(path, state)


def load_state_dict(path, module: torch.nn.Module) -> None:
    """Load an archive into ``module``, validating names and shapes against it."""
    expected = {k: tuple(v.shape) for k, v in module.state_dict().items()}
    arrays = load_archive(path, expected=expected)
    state = {k: torch.from_numpy(v) for k, v in arrays.items()}
    module.load_state_dict(state)
