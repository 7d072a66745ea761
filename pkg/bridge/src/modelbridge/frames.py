"""Length-prefixed JSON framing: u32 little-endian byte length, UTF-8 payload.

Floats are serialized as plain JSON numbers; Python's shortest-round-trip
float formatting means values cross the wire bit-exactly.
"""

from __future__ import annotations

import json
import struct

_LEN = struct.Struct("<I")
MAX_FRAME_BYTES = 64 * 1024 * 1024


class FrameError(Exception):
    pass


def write_frame(stream, obj: dict) -> None:
    data = json.dumps(obj, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    stream.write(_LEN.pack(len(data)))
    stream.write(data)
    stream.flush()


def read_frame(stream) -> dict | None:
    """Read one frame; returns None on clean EOF at a frame boundary."""
    header = stream.read(_LEN.size)
    if len(header) == 0:
        return None
    if len(header) < _LEN.size:
        raise FrameError("stream closed mid length prefix")
    (length,) = _LEN.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise FrameError(f"frame of {length} bytes exceeds the {MAX_FRAME_BYTES} cap")
    payload = stream.read(length)
    if len(payload) < length:
        raise FrameError(f"frame truncated: got {len(payload)} of {length} bytes")
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise FrameError("frame payload must be a JSON object")
    return obj
