from hypothesis import given, settings
from hypothesis import strategies as st

from qncd.crc64 import Crc64Stream, crc64


def test_known_check_value():
    assert crc64(b"123456789") == 0x995DC9BBDF1939FA


def test_empty():
    assert crc64(b"") == 0


def test_streaming_matches_oneshot():
    data = bytes(range(251)) * 37
    stream = Crc64Stream()
    for i in range(0, len(data), 97):
        stream.update(data[i : i + 97])
    assert stream.value == crc64(data)


@given(st.binary(max_size=512), st.integers(0, 512))
@settings(max_examples=50, deadline=None)
def test_split_invariance(data, cut):
    cut = min(cut, len(data))
    stream = Crc64Stream()
    stream.update(data[:cut])
    stream.update(data[cut:])
    assert stream.value == crc64(data)


@given(st.binary(min_size=1, max_size=128), st.data())
@settings(max_examples=50, deadline=None)
def test_single_byte_flip_changes_value(data, draw):
    pos = draw.draw(st.integers(0, len(data) - 1))
    bit = draw.draw(st.integers(0, 7))
    corrupted = bytearray(data)
    corrupted[pos] ^= 1 << bit
    assert crc64(bytes(corrupted)) != crc64(data)
