"""Versioned binary checkpoint container: named float64 arrays + json manifest.

Layout: 8-byte magic, little-endian u64 manifest length, manifest json
(name -> {shape, offset} into the payload), then the raw arrays. The format
carries no timestamps, so identical state produces identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"NNCKPT\x01\x00"


def _canonical(arr):
    # np.ascontiguousarray would promote 0-d arrays to 1-d; copy preserves shape
    arr = np.asarray(arr, dtype=np.float64)
    return arr if arr.flags["C_CONTIGUOUS"] else arr.copy(order="C")


def save_checkpoint(path, arrays: dict) -> None:
    names = sorted(arrays)
    canon = {name: _canonical(arrays[name]) for name in names}
    manifest = {}
    offset = 0
    for name in names:
        manifest[name] = {"shape": list(canon[name].shape), "offset": offset}
        offset += canon[name].nbytes
    blob = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for name in names:
            f.write(canon[name].tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"{path}: not a checkpoint container (bad magic)")
        (mlen,) = struct.unpack("<Q", f.read(8))
        try:
            manifest = json.loads(f.read(mlen))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: corrupt manifest: {exc}") from exc
        payload = f.read()
    arrays = {}
    for name, meta in manifest.items():
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        end = start + 8 * count
        if end > len(payload):
            raise FormatError(f"{path}: array '{name}' extends past end of file")
        arrays[name] = np.frombuffer(payload[start:end], dtype=np.float64).reshape(shape).copy()
    return arrays


def dump_json(path, obj) -> None:
    """Deterministic json emission (sorted keys, fixed separators)."""
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")
