import io

import pytest

from modelbridge.frames import FrameError, read_frame, write_frame


def test_round_trip():
    buf = io.BytesIO()
    write_frame(buf, {"op": "hello", "dim": 8})
    buf.seek(0)
    assert read_frame(buf) == {"op": "hello", "dim": 8}


def test_prefix_equals_payload_length():
    buf = io.BytesIO()
    write_frame(buf, {"op": "x", "v": [1.5, 2.5]})
    raw = buf.getvalue()
    assert int.from_bytes(raw[:4], "little") == len(raw) - 4


def test_floats_survive_bit_exact():
    value = 1.0 / 3.0
    buf = io.BytesIO()
    write_frame(buf, {"v": value})
    buf.seek(0)
    assert read_frame(buf)["v"] == value


def test_clean_eof_returns_none():
    assert read_frame(io.BytesIO(b"")) is None


def test_mid_frame_eof_raises():
    buf = io.BytesIO()
    write_frame(buf, {"op": "hello"})
    with pytest.raises(FrameError):
        read_frame(io.BytesIO(buf.getvalue()[:-2]))


def test_non_object_payload_rejected():
    payload = b"[1, 2, 3]"
    frame = len(payload).to_bytes(4, "little") + payload
    with pytest.raises(FrameError):
        read_frame(io.BytesIO(frame))
