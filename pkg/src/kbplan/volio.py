"""KBPV volume files.

Layout (little-endian throughout):

    4 bytes   magic "KBPV"
    u32       version (currently 1)
    u32 x 3   dims (nx, ny, nz)
    f32 x 3   spacing (mm per axis)
    u8        payload kind: 0 = density (f32), 1 = labels (u8), 2 = dose (f32)
    payload   row-major with x fastest (Fortran order for [x, y, z] arrays)
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"KBPV"
VERSION = 1

KIND_DENSITY = 0
KIND_LABELS = 1
KIND_DOSE = 2

_KIND_DTYPE = {
    KIND_DENSITY: np.dtype("<f4"),
    KIND_LABELS: np.dtype("u1"),
    KIND_DOSE: np.dtype("<f4"),
}


def volume_bytes(array: np.ndarray, spacing, kind: int) -> bytes:
    if kind not in _KIND_DTYPE:
        raise ValueError(f"unknown payload kind {kind}")
    if array.ndim != 3:
        raise ValueError("expected a 3D volume")
    nx, ny, nz = array.shape
    header = MAGIC + struct.pack("<IIII fff B", VERSION, nx, ny, nz, *spacing, kind)
    payload = np.ascontiguousarray(
        array.ravel(order="F"), dtype=_KIND_DTYPE[kind]
    ).tobytes()
    return header + payload


def parse_volume(data: bytes) -> tuple[np.ndarray, tuple[float, float, float], int]:
    if data[:4] != MAGIC:
        raise ValueError("not a KBPV volume (bad magic)")
    version, nx, ny, nz, sx, sy, sz, kind = struct.unpack_from("<IIII fff B", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported KBPV version {version}")
    if kind not in _KIND_DTYPE:
        raise ValueError(f"unknown payload kind {kind}")
    dtype = _KIND_DTYPE[kind]
    offset = 4 + struct.calcsize("<IIII fff B")
    count = nx * ny * nz
    flat = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    array = flat.reshape((nx, ny, nz), order="F").copy()
    return array, (sx, sy, sz), kind


def volume_size_bytes(data: bytes, offset: int = 0) -> int:
    """Total byte length of the KBPV blob starting at offset."""
    if data[offset : offset + 4] != MAGIC:
        raise ValueError("not a KBPV volume (bad magic)")
    _, nx, ny, nz, _, _, _, kind = struct.unpack_from("<IIII fff B", data, offset + 4)
    header = 4 + struct.calcsize("<IIII fff B")
    return header + nx * ny * nz * _KIND_DTYPE[kind].itemsize


def write_volume(path, array: np.ndarray, spacing, kind: int):
    with open(path, "wb") as f:
        f.write(volume_bytes(array, spacing, kind))


def read_volume(path) -> tuple[np.ndarray, tuple[float, float, float], int]:
    with open(path, "rb") as f:
        return parse_volume(f.read())
