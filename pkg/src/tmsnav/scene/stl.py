"""Binary STL metadata: triangle count and bounding box."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .tree import SceneError

HEADER_BYTES = 80
RECORD_BYTES = 50
_RECORD = np.dtype([
    ("normal", "<f4", (3,)),
    ("vertices", "<f4", (3, 3)),
    ("attr", "<u2"),
])


class STLError(SceneError):
    pass


class CorruptSTLError(STLError):
    pass


class UnsupportedSTLFormatError(STLError):
    pass


@dataclass(frozen=True)
class MeshMetadata:
    triangle_count: int
    bbox_min: tuple
    bbox_max: tuple


def load_stl_metadata(path) -> MeshMetadata:
    """Read a binary STL; ASCII STL is rejected."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    size = len(data)
    if size < HEADER_BYTES + 4:
        if data.lstrip().startswith(b"solid"):
            raise UnsupportedSTLFormatError(f"{path}: ASCII STL is not supported")
        raise CorruptSTLError(f"{path}: {size} bytes is too short for a binary STL")
    (count,) = struct.unpack_from("<I", data, HEADER_BYTES)
    expected = HEADER_BYTES + 4 + RECORD_BYTES * count
    if size != expected:
        # binary headers may legally start with "solid"; only call it ASCII
        # when the binary size check has already failed
        if data.lstrip().startswith(b"solid"):
            raise UnsupportedSTLFormatError(f"{path}: ASCII STL is not supported")
        raise CorruptSTLError(
            f"{path}: declares {count} triangles ({expected} bytes) but is {size} bytes")
    if count < 1:
        raise CorruptSTLError(f"{path}: contains no triangles")
    records = np.frombuffer(data, dtype=_RECORD, count=count, offset=HEADER_BYTES + 4)
    verts = records["vertices"].reshape(-1, 3).astype(float)
    return MeshMetadata(count, tuple(verts.min(axis=0)), tuple(verts.max(axis=0)))


def write_binary_stl(path, triangles, header: bytes = b"tmsnav") -> None:
    """Write ``triangles`` (n, 3, 3) as a binary STL with computed normals."""
    tri = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, lengths, out=np.zeros_like(normals), where=lengths > 0)
    records = np.zeros(len(tri), dtype=_RECORD)
    records["normal"] = normals
    records["vertices"] = tri
    with open(path, "wb") as fh:
        fh.write(header[:HEADER_BYTES].ljust(HEADER_BYTES, b"\0"))
        fh.write(struct.pack("<I", len(tri)))
        fh.write(records.tobytes())
