"""Flat binary checkpoints for named float64 arrays.

Layout: 4-byte magic ``ECHK``, little-endian u32 version, u32 header length,
a UTF-8 JSON header (metadata plus ``[name, shape]`` per array), then the raw
arrays as float64 little-endian in header order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ECHK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    entries = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        entries.append([name, list(arr.shape)])
        blobs.append(arr.tobytes())
    header = json.dumps({"meta": meta or {}, "arrays": entries}, sort_keys=True).encode()
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + b"".join(blobs)


def loads(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(data[12:12 + hlen].decode())
    pos = 12 + hlen
    arrays = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        end = pos + 8 * n
        if end > len(data):
            raise CheckpointError(f"truncated checkpoint at array {name!r}")
        arrays[name] = np.frombuffer(data[pos:end], dtype="<f8").reshape(tuple(shape)).astype(float)
        pos = end
    if pos != len(data):
        raise CheckpointError("trailing bytes after last array")
    return arrays, header["meta"]


def save(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(arrays, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
