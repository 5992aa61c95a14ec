"""OpenIGTLink codec, stream framing and TCP transport."""
from .codec import (
    HEADER_SIZE,
    CodecError,
    EncodingError,
    IncompleteFrameError,
    IntegrityError,
    MalformedBodyError,
    Message,
    MessageHeader,
    PolyDataBody,
    RawBody,
    StatusBody,
    TransformBody,
    decode,
    decode_frame,
    decode_header,
    encode,
    make_message,
)
from .crc import crc64
from .framing import FrameReader, read_frames
from .transport import (
    EndpointConfig,
    IgtlClient,
    IgtlServer,
    Received,
    SessionClosedError,
    SessionEvent,
    StartupError,
    connect,
    serve,
)

__all__ = [
    "HEADER_SIZE", "CodecError", "EncodingError", "IncompleteFrameError",
    "IntegrityError", "MalformedBodyError", "Message", "MessageHeader",
    "PolyDataBody", "RawBody", "StatusBody", "TransformBody", "decode",
    "decode_frame", "decode_header", "encode", "make_message", "crc64",
    "FrameReader", "read_frames", "EndpointConfig", "IgtlClient", "IgtlServer",
    "Received", "SessionClosedError", "SessionEvent", "StartupError",
    "connect", "serve",
]
