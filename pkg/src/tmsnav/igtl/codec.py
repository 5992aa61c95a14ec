"""Encoder/decoder for the OpenIGTLink subset used by the navigation stack.

Layouts: version-1 58-byte header; TRANSFORM, STATUS and POLYDATA bodies as
published for protocol version 2. All multi-byte fields are big-endian.
Message types outside the subset decode to :class:`RawBody` so that nothing
on the wire is silently dropped.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .crc import crc64

HEADER_SIZE = 58
HEADER_VERSION = 1
TYPE_NAME_LEN = 12
DEVICE_NAME_LEN = 20
ERROR_NAME_LEN = 20
STATUS_FIXED_SIZE = 30
POLYDATA_COUNTS_SIZE = 40

_HEADER = struct.Struct(">H12s20sIIQQ")
_TRANSFORM = struct.Struct(">12f")
_STATUS = struct.Struct(">Hq20s")
_POLY_COUNTS = struct.Struct(">10I")

# OpenIGTLink status codes (subset)
STATUS_OK = 1
STATUS_UNKNOWN_ERROR = 2
STATUS_NOT_FOUND = 4
STATUS_BUSY = 6
STATUS_CHECKSUM_ERROR = 9
STATUS_CONFIG_ERROR = 10
STATUS_UNKNOWN_INSTRUCTION = 12
STATUS_NOT_READY = 13


class CodecError(Exception):
    """Base class for codec failures."""


class EncodingError(CodecError):
    pass


class IntegrityError(CodecError):
    """Body CRC does not match the header."""

    def __init__(self, device_name: str, expected: int, actual: int):
        super().__init__(
            f"CRC mismatch for device {device_name!r}: "
            f"header {expected:#018x}, body {actual:#018x}"
        )
        self.device_name = device_name
        self.expected = expected
        self.actual = actual


class IncompleteFrameError(CodecError):
    """Input ended before a full frame was available."""

    def __init__(self, message: str, consumed: int = 0, pending: int = 0):
        super().__init__(message)
        self.consumed = consumed
        self.pending = pending


class MalformedBodyError(CodecError):
    pass


@dataclass(frozen=True)
class MessageHeader:
    version: int
    type_name: str
    device_name: str
    timestamp_sec: int
    timestamp_frac: int
    body_size: int
    body_crc: int

    def pack(self) -> bytes:
        return _HEADER.pack(
            self.version,
            _ascii_field(self.type_name, TYPE_NAME_LEN, "type_name"),
            _ascii_field(self.device_name, DEVICE_NAME_LEN, "device_name"),
            self.timestamp_sec,
            self.timestamp_frac,
            self.body_size,
            self.body_crc,
        )

    @property
    def timestamp(self) -> float:
        return frac_to_seconds(self.timestamp_sec, self.timestamp_frac)


@dataclass(frozen=True)
class TransformBody:
    """Upper 3x4 of a homogeneous matrix, column-major (R columns, then t)."""

    matrix: tuple

    TYPE_NAME = "TRANSFORM"

    @classmethod
    def identity(cls) -> "TransformBody":
        return cls((1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0))

    @classmethod
    def from_matrix(cls, m) -> "TransformBody":
        m = np.asarray(m, dtype=float)
        if m.shape not in ((4, 4), (3, 4)):
            raise ValueError(f"expected a 4x4 or 3x4 matrix, got {m.shape}")
        cols = [m[0:3, j] for j in range(4)]
        # round through float32 so the body equals what the wire will carry
        vals = np.concatenate(cols).astype(np.float32).astype(float)
        return cls(tuple(float(v) for v in vals))

    def as_matrix(self) -> np.ndarray:
        out = np.eye(4)
        vals = np.asarray(self.matrix, dtype=float)
        for j in range(4):
            out[0:3, j] = vals[3 * j:3 * j + 3]
        return out

    def is_orthonormal(self, tol: float = 1e-4) -> bool:
        r = self.as_matrix()[:3, :3]
        return bool(np.all(np.abs(r.T @ r - np.eye(3)) <= tol))


@dataclass(frozen=True)
class StatusBody:
    code: int
    subcode: int = 0
    error_name: str = ""
    status_message: str = ""

    TYPE_NAME = "STATUS"

    @property
    def ok(self) -> bool:
        return self.code == STATUS_OK


@dataclass(frozen=True)
class PolyDataBody:
    """Points plus polygon cells; vertices, lines and strips are not carried."""

    points: tuple
    polygons: tuple = ()
    attributes: tuple = ()

    TYPE_NAME = "POLYDATA"

    @classmethod
    def from_points(cls, points, polygons: Iterable[Sequence[int]] = ()) -> "PolyDataBody":
        pts = np.asarray(points, dtype=float).reshape(-1, 3).astype(np.float32)
        return cls(
            tuple(tuple(float(c) for c in p) for p in pts),
            tuple(tuple(int(i) for i in poly) for poly in polygons),
        )

    def points_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float).reshape(-1, 3)


@dataclass(frozen=True)
class RawBody:
    data: bytes


Body = Union[TransformBody, StatusBody, PolyDataBody, RawBody]

@dataclass(frozen=True)
class Message:
    """One OpenIGTLink frame: addressing fields plus a typed body."""

    device_name: str
    body: Body
    timestamp_sec: int = 0
    timestamp_frac: int = 0
    type_name: str = field(default="")
    version: int = HEADER_VERSION

    def __post_init__(self):
        if not self.type_name:
            if isinstance(self.body, RawBody):
                raise ValueError("raw bodies need an explicit type_name")
            object.__setattr__(self, "type_name", self.body.TYPE_NAME)

    @property
    def timestamp(self) -> float:
        return frac_to_seconds(self.timestamp_sec, self.timestamp_frac)


def seconds_to_frac(t: float) -> tuple:
    """Split Unix seconds into (seconds, 2**-32 fraction), rounding to nearest."""
    if not math.isfinite(t) or t < 0:
        raise EncodingError(f"invalid timestamp {t!r}")
    sec = int(math.floor(t))
    frac = int(round((t - sec) * 2 ** 32))
    if frac >= 2 ** 32:
        sec, frac = sec + 1, 0
    return sec, frac


def frac_to_seconds(sec: int, frac: int) -> float:
    return sec + frac / 2 ** 32


def make_message(device_name: str, body: Body, timestamp: float = 0.0,
                 type_name: str = "") -> Message:
    sec, frac = seconds_to_frac(timestamp)
    return Message(device_name, body, sec, frac, type_name)


def _ascii_field(text: str, width: int, what: str) -> bytes:
    try:
        raw = text.encode("ascii")
    except UnicodeEncodeError as exc:
        raise EncodingError(f"{what} must be ASCII: {text!r}") from exc
    if len(raw) > width:
        raise EncodingError(f"{what} {text!r} exceeds {width} bytes")
    return raw


def _strip(raw: bytes) -> str:
    return raw.rstrip(b"\x00").decode("ascii", errors="replace")


def _pack_transform(body: TransformBody) -> bytes:
    if len(body.matrix) != 12:
        raise EncodingError("TRANSFORM body needs exactly 12 values")
    if not all(math.isfinite(v) for v in body.matrix):
        raise EncodingError("TRANSFORM body contains non-finite values")
    return _TRANSFORM.pack(*body.matrix)


def _pack_status(body: StatusBody) -> bytes:
    if not 0 <= body.code <= 0xFFFF:
        raise EncodingError(f"status code {body.code} out of range")
    if not -2 ** 63 <= body.subcode < 2 ** 63:
        raise EncodingError(f"status subcode {body.subcode} out of range")
    name = _ascii_field(body.error_name, ERROR_NAME_LEN, "error_name")
    try:
        text = body.status_message.encode("ascii")
    except UnicodeEncodeError as exc:
        raise EncodingError("status_message must be ASCII") from exc
    return _STATUS.pack(body.code, body.subcode, name) + text


def _pack_polydata(body: PolyDataBody) -> bytes:
    if body.attributes:
        raise EncodingError("POLYDATA attributes are not supported")
    n = len(body.points)
    cells = []
    for poly in body.polygons:
        if any(i < 0 or i >= n for i in poly):
            raise EncodingError(f"polygon {poly} references a point outside 0..{n - 1}")
        cells.append(len(poly))
        cells.extend(poly)
    pts = np.asarray(body.points, dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise EncodingError("POLYDATA points contain non-finite values")
    counts = _POLY_COUNTS.pack(n, 0, 0, 0, 0, len(body.polygons), 4 * len(cells), 0, 0, 0)
    return (counts + np.ascontiguousarray(pts, dtype=">f4").tobytes()
            + np.asarray(cells, dtype=">u4").tobytes())


def encode_body(body: Body) -> bytes:
    if isinstance(body, TransformBody):
        return _pack_transform(body)
    if isinstance(body, StatusBody):
        return _pack_status(body)
    if isinstance(body, PolyDataBody):
        return _pack_polydata(body)
    if isinstance(body, RawBody):
        return bytes(body.data)
    raise EncodingError(f"unsupported body {type(body).__name__}")


def encode(message: Message) -> bytes:
    try:
        body = encode_body(message.body)
    except (struct.error, OverflowError) as exc:
        raise EncodingError(f"{message.device_name!r}: {exc}") from exc
    header = MessageHeader(
        version=message.version,
        type_name=message.type_name,
        device_name=message.device_name,
        timestamp_sec=message.timestamp_sec,
        timestamp_frac=message.timestamp_frac,
        body_size=len(body),
        body_crc=crc64(body),
    )
    try:
        return header.pack() + body
    except (struct.error, OverflowError) as exc:
        raise EncodingError(str(exc)) from exc


def decode_header(data: bytes) -> MessageHeader:
    if len(data) < HEADER_SIZE:
        raise IncompleteFrameError(
            f"need {HEADER_SIZE} header bytes, have {len(data)}", pending=len(data))
    version, type_name, device, sec, frac, size, crc = _HEADER.unpack_from(data)
    return MessageHeader(version, _strip(type_name), _strip(device), sec, frac, size, crc)


def decode_body(type_name: str, body: bytes) -> Body:
    if type_name == "TRANSFORM":
        if len(body) != _TRANSFORM.size:
            raise MalformedBodyError(f"TRANSFORM body is {len(body)} bytes, expected 48")
        return TransformBody(tuple(_TRANSFORM.unpack(body)))
    if type_name == "STATUS":
        if len(body) < STATUS_FIXED_SIZE:
            raise MalformedBodyError(f"STATUS body is {len(body)} bytes, expected >= 30")
        code, subcode, name = _STATUS.unpack_from(body)
        return StatusBody(code, subcode, _strip(name), _strip(body[STATUS_FIXED_SIZE:]))
    if type_name == "POLYDATA":
        return _unpack_polydata(body)
    return RawBody(bytes(body))


def _unpack_polydata(body: bytes) -> PolyDataBody:
    if len(body) < POLYDATA_COUNTS_SIZE:
        raise MalformedBodyError("POLYDATA body shorter than its counts header")
    (n_points, _, size_vert, _, size_lines, n_poly, size_poly,
     _, size_strips, n_attr) = _POLY_COUNTS.unpack_from(body)
    if size_vert or size_lines or size_strips or n_attr:
        # content outside the subset is kept verbatim rather than half-parsed
        return RawBody(bytes(body))
    offset = POLYDATA_COUNTS_SIZE
    end_points = offset + 12 * n_points
    if end_points > len(body):
        raise MalformedBodyError("POLYDATA point array truncated")
    pts = np.frombuffer(body[offset:end_points], dtype=">f4").reshape(-1, 3)
    offset = end_points
    if offset + size_poly > len(body):
        raise MalformedBodyError("POLYDATA polygon array truncated")
    cells = np.frombuffer(body[offset:offset + size_poly], dtype=">u4").tolist()
    polygons = []
    i = 0
    while i < len(cells):
        k = cells[i]
        polygons.append(tuple(cells[i + 1:i + 1 + k]))
        i += k + 1
    if len(polygons) != n_poly or i != len(cells):
        raise MalformedBodyError("POLYDATA polygon count disagrees with cell data")
    return PolyDataBody(tuple(tuple(float(c) for c in p) for p in pts), tuple(polygons))


def decode(data: bytes) -> Message:
    """Decode exactly one frame from the start of ``data``.

    Trailing bytes beyond the first frame are ignored; use
    :class:`~tmsnav.igtl.framing.FrameReader` for streams.
    """
    message, _ = decode_frame(data)
    return message


def decode_frame(data: bytes) -> tuple:
    """Decode the first frame of ``data``; return ``(message, bytes_used)``."""
    header = decode_header(data)
    end = HEADER_SIZE + header.body_size
    if len(data) < end:
        raise IncompleteFrameError(
            f"frame for {header.device_name!r} needs {end} bytes, have {len(data)}",
            pending=len(data))
    body = bytes(data[HEADER_SIZE:end])
    actual = crc64(body)
    if actual != header.body_crc:
        raise IntegrityError(header.device_name, header.body_crc, actual)
    message = Message(
        device_name=header.device_name,
        body=decode_body(header.type_name, body),
        timestamp_sec=header.timestamp_sec,
        timestamp_frac=header.timestamp_frac,
        type_name=header.type_name,
        version=header.version,
    )
    return message, end
