"""Minimal MRC2014 reader/writer (little-endian, mode 2 float32).

Covers single volumes (ispg=1) and image stacks (ispg=0) with the standard
1024-byte header, "MAP " tag, and little-endian machine stamp.
"""

import struct

import numpy as np

HEADER_SIZE = 1024
MODE_FLOAT32 = 2
MACHINE_STAMP = b"\x44\x44\x00\x00"


def write_mrc(path, data: np.ndarray, voxel_size: float = 1.0,
              is_stack: bool = False) -> None:
    """Write a [nz, ny, nx] float32 array (2D arrays become one section)."""
    arr = np.asarray(data, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError("data must be 2D or 3D")
    nz, ny, nx = arr.shape
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<10i", hdr, 0, nx, ny, nz, MODE_FLOAT32,
                     0, 0, 0, nx, ny, nz)
    struct.pack_into("<6f", hdr, 40, nx * voxel_size, ny * voxel_size,
                     nz * voxel_size, 90.0, 90.0, 90.0)
    struct.pack_into("<3i", hdr, 64, 1, 2, 3)
    struct.pack_into("<3f", hdr, 76, float(arr.min()), float(arr.max()),
                     float(arr.mean()))
    struct.pack_into("<2i", hdr, 88, 0 if is_stack else 1, 0)
    hdr[208:212] = b"MAP "
    hdr[212:216] = MACHINE_STAMP
    struct.pack_into("<f", hdr, 216, float(arr.std()))
    struct.pack_into("<i", hdr, 220, 1)
    label = b"created by empm"
    hdr[224:224 + len(label)] = label
    with open(path, "wb") as f:
        f.write(bytes(hdr))
        f.write(arr.tobytes())


def read_mrc(path) -> tuple[np.ndarray, float]:
    """Read a mode-2 MRC file; returns ([nz, ny, nx] float32, voxel size)."""
    with open(path, "rb") as f:
        hdr = f.read(HEADER_SIZE)
        if len(hdr) < HEADER_SIZE:
            raise ValueError(f"{path}: truncated MRC header")
        nx, ny, nz, mode = struct.unpack_from("<4i", hdr, 0)
        if hdr[208:212] not in (b"MAP ", b"MAP\x00"):
            raise ValueError(f"{path}: missing MAP tag")
        if mode != MODE_FLOAT32:
            raise ValueError(f"{path}: unsupported MRC mode {mode}")
        nsymbt = struct.unpack_from("<i", hdr, 92)[0]
        if nsymbt:
            f.read(nsymbt)
        cella_x = struct.unpack_from("<f", hdr, 40)[0]
        count = nx * ny * nz
        raw = f.read(count * 4)
    if len(raw) != count * 4:
        raise ValueError(f"{path}: truncated MRC payload")
    payload = np.frombuffer(raw, dtype="<f4", count=count)
    voxel = cella_x / nx if nx else 1.0
    return payload.reshape(nz, ny, nx).astype(np.float32), float(voxel)
