"""Reassembly of OpenIGTLink frames from an arbitrarily fragmented byte stream."""
from __future__ import annotations

from typing import Iterable, Iterator, List

from .codec import (
    HEADER_SIZE,
    IncompleteFrameError,
    IntegrityError,
    Message,
    decode_frame,
    decode_header,
)


class FrameReader:
    """Incremental frame splitter.

    ``feed`` returns the messages completed by each chunk. Frames that fail
    their CRC are skipped (the header's body size keeps the stream aligned)
    and recorded in ``rejected``.
    """

    def __init__(self):
        self._buf = bytearray()
        self.consumed = 0
        self.rejected: List[IntegrityError] = []

    @property
    def pending(self) -> int:
        return len(self._buf)

    def feed(self, chunk: bytes) -> List[Message]:
        self._buf += chunk
        out = []
        while True:
            try:
                message = self._pop()
            except IntegrityError as exc:
                self.rejected.append(exc)
                continue
            if message is None:
                return out
            out.append(message)

    def iter_strict(self, chunk: bytes) -> Iterator[Message]:
        """Like ``feed`` but raise on the first corrupt frame."""
        self._buf += chunk
        while True:
            message = self._pop()
            if message is None:
                return
            yield message

    def _pop(self):
        if len(self._buf) < HEADER_SIZE:
            return None
        header = decode_header(self._buf)
        total = HEADER_SIZE + header.body_size
        if len(self._buf) < total:
            return None
        frame = bytes(self._buf[:total])
        del self._buf[:total]
        self.consumed += total
        message, _ = decode_frame(frame)
        return message

    def close(self):
        """Signal end of stream; raises if a partial frame is left over."""
        if self._buf:
            raise IncompleteFrameError(
                f"stream ended with {len(self._buf)} bytes of an unfinished frame",
                consumed=self.consumed,
                pending=len(self._buf),
            )


def read_frames(chunks: Iterable[bytes]) -> Iterator[Message]:
    """Yield every message carried by ``chunks``, independent of chunk boundaries.

    Raises :class:`IntegrityError` on a corrupt frame and
    :class:`IncompleteFrameError` (with ``consumed``) if the stream stops
    mid-frame.
    """
    reader = FrameReader()
    for chunk in chunks:
        yield from reader.iter_strict(chunk)
    reader.close()
