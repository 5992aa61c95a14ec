import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_message
from tmsnav.igtl.codec import (
    HEADER_SIZE,
    IncompleteFrameError,
    IntegrityError,
    StatusBody,
    TransformBody,
    encode,
    make_message,
)
from tmsnav.igtl.framing import FrameReader, read_frames


def _stream(n, seed=3):
    r = random.Random(seed)
    msgs = [random_message(r) for _ in range(n)]
    return msgs, b"".join(encode(m) for m in msgs)


def _split(data, cuts):
    cuts = sorted(set(c % (len(data) + 1) for c in cuts))
    bounds = [0] + cuts + [len(data)]
    return [data[a:b] for a, b in zip(bounds, bounds[1:])]


@settings(max_examples=100)
@given(st.lists(st.integers(0, 10 ** 6), max_size=40))
def test_messages_survive_any_fragmentation(cuts):
    msgs, data = _stream(12)
    assert list(read_frames(_split(data, cuts))) == msgs


def test_byte_at_a_time():
    msgs, data = _stream(5)
    reader = FrameReader()
    got = []
    for i in range(len(data)):
        got += reader.feed(data[i:i + 1])
    assert got == msgs
    assert reader.pending == 0
    reader.close()


def test_truncated_stream_reports_consumed_bytes():
    msgs, data = _stream(3)
    first = len(encode(msgs[0]))
    chunks = [data[:first + 10]]
    gen = read_frames(chunks)
    assert next(gen) == msgs[0]
    with pytest.raises(IncompleteFrameError) as info:
        next(gen)
    assert info.value.consumed == first
    assert info.value.pending == 10


def test_lenient_reader_skips_corrupt_frame_and_keeps_neighbours():
    a = encode(make_message("A", TransformBody.identity()))
    b = bytearray(encode(make_message("B", TransformBody.identity())))
    b[HEADER_SIZE + 3] ^= 0x10
    c = encode(make_message("C", StatusBody(1, 0, "", "x")))
    reader = FrameReader()
    got = reader.feed(a + bytes(b) + c)
    assert [m.device_name for m in got] == ["A", "C"]
    assert len(reader.rejected) == 1 and reader.rejected[0].device_name == "B"


def test_strict_reader_raises_on_corrupt_frame():
    b = bytearray(encode(make_message("B", TransformBody.identity())))
    b[-1] ^= 0x80
    with pytest.raises(IntegrityError):
        list(read_frames([bytes(b)]))
