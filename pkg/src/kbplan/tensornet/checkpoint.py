"""Named-tensor checkpoint archive.

    4 bytes   magic "KBPT"
    u32       version (1)
    u32       manifest length in bytes
    manifest  UTF-8 JSON: {"layers": [...], "tensors": [{"name", "shape"}]}
    payload   tensors as f32 little-endian, concatenated in manifest order

The manifest's "layers" entry carries the architecture description needed
to rebuild the module before loading weights. Writing is deterministic, so
identical parameters produce byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"KBPT"
VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray], layer_specs):
    manifest = {
        "layers": layer_specs,
        "tensors": [
            {"name": name, "shape": list(arr.shape)} for name, arr in tensors.items()
        ],
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for arr in tensors.values():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], list]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ValueError("not a KBPT checkpoint (bad magic)")
    version, mlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    manifest = json.loads(data[12 : 12 + mlen].decode("utf-8"))
    offset = 12 + mlen
    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        flat = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        offset += count * 4
        tensors[entry["name"]] = flat.reshape(shape).copy()
    return tensors, manifest["layers"]
