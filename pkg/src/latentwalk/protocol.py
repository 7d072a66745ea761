"""Length-prefixed JSON wire protocol and the external-backend client.

Frames are a little-endian u32 byte length followed by a UTF-8 JSON object.
The client speaks to a child process over its stdin/stdout:

* handshake: ``{"op":"hello","version":1,"dim":D,"embed_dim":E}`` ->
  ``{"ok":true,"version":1}``
* ``{"op":"generate","id":...,"latent":[...]}`` ->
  ``{"ok":true,"id":...,"metadata":{...},"image_uri":...}`` (optionally a
  ``"quality"`` map)
* ``{"op":"embed","id":...}`` -> ``{"ok":true,"embedding":[...]}``
* ``{"op":"center"}`` -> ``{"ok":true,"latent":[...]}`` (latent may be null)
* ``{"op":"shutdown"}`` -> ``{"ok":true}``, then the server exits.

Errors come back as ``{"ok":false,"error":...}``. Floats are serialized as
plain JSON numbers; both sides rely on shortest-round-trip formatting, so
values survive the wire bit-exactly.
"""

from __future__ import annotations

import json
import struct
import subprocess

import numpy as np

from .backend import Embedding, ExternalBackendConfig, SampleMetadata, SampleRef, latent_digest
from .errors import BackendError, HandshakeError, ProtocolError, SpawnError

PROTOCOL_VERSION = 1
_LEN = struct.Struct("<I")
MAX_FRAME_BYTES = 64 * 1024 * 1024


def write_frame(stream, obj: dict) -> None:
    data = json.dumps(obj, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    stream.write(_LEN.pack(len(data)))
    stream.write(data)
    stream.flush()


def read_frame(stream) -> dict:
    header = stream.read(_LEN.size)
    if len(header) == 0:
        raise ProtocolError("stream closed while waiting for a frame")
    if len(header) < _LEN.size:
        raise ProtocolError("stream closed mid length prefix")
    (length,) = _LEN.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {length} bytes exceeds the {MAX_FRAME_BYTES} cap")
    payload = stream.read(length)
    if len(payload) < length:
        raise ProtocolError(f"frame truncated: got {len(payload)} of {length} bytes")
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("frame payload must be a JSON object")
    return obj


class ExternalSession:
    """Serial one-request-at-a-time client for a spawned backend process."""

    backend_kind = "external"

    def __init__(self, config: ExternalBackendConfig):
        self.config = config
        self.dim = config.dim
        self.embed_dim = config.embed_dim
        try:
            self._proc = subprocess.Popen(
                list(config.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,  # diagnostics pass through to our own stderr
            )
        except OSError as exc:
            raise SpawnError(f"could not spawn backend {config.command!r}: {exc}") from exc
        self._closed = False
        try:
            reply = self._roundtrip(
                {
                    "op": "hello",
                    "version": PROTOCOL_VERSION,
                    "dim": config.dim,
                    "embed_dim": config.embed_dim,
                }
            )
        except BackendError as exc:
            self._kill()
            if isinstance(exc, ProtocolError):
                raise HandshakeError(f"backend died during handshake: {exc}") from exc
            raise HandshakeError(str(exc)) from exc
        if reply.get("version") != PROTOCOL_VERSION:
            self._kill()
            raise HandshakeError(
                f"backend speaks protocol version {reply.get('version')!r}, "
                f"expected {PROTOCOL_VERSION}"
            )

    def _roundtrip(self, request: dict) -> dict:
        if self._closed or self._proc.stdin is None or self._proc.stdout is None:
            raise BackendError("session is closed")
        try:
            write_frame(self._proc.stdin, request)
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"backend pipe broke: {exc}") from exc
        reply = read_frame(self._proc.stdout)
        if not reply.get("ok"):
            raise BackendError(f"backend error reply: {reply.get('error')!r}")
        return reply

    def _check_latent(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"latent has shape {w.shape}, session dim is {self.dim}")
        return w

    def generate(self, w: np.ndarray, sample_id: str | None = None) -> SampleRef:
        w = self._check_latent(w)
        if sample_id is None:
            sample_id = f"x{latent_digest(w):016x}"
        reply = self._roundtrip(
            {"op": "generate", "id": sample_id, "latent": [float(x) for x in w]}
        )
        meta_raw = reply.get("metadata")
        if not isinstance(meta_raw, dict):
            raise ProtocolError("generate reply lacks a metadata object")
        quality = reply.get("quality") or {}
        if not isinstance(quality, dict):
            raise ProtocolError("generate reply quality must be an object")
        return SampleRef(
            id=str(reply.get("id", sample_id)),
            latent_hash=latent_digest(w),
            metadata=SampleMetadata.from_dict(meta_raw),
            image_uri=reply.get("image_uri"),
            quality={str(k): float(v) for k, v in quality.items()},
        )

    def embed(self, ref: SampleRef) -> Embedding:
        reply = self._roundtrip({"op": "embed", "id": ref.id})
        values = reply.get("embedding")
        if not isinstance(values, list):
            raise ProtocolError("embed reply lacks an embedding array")
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (self.embed_dim,):
            raise BackendError(
                f"embedding has dim {arr.shape}, session embed_dim is {self.embed_dim}"
            )
        return Embedding(values=arr)

    def center(self) -> np.ndarray | None:
        try:
            reply = self._roundtrip({"op": "center"})
        except ProtocolError:
            raise
        except BackendError:
            return None  # optional op; "unsupported" is a valid answer
        latent = reply.get("latent")
        if latent is None:
            return None
        arr = np.asarray(latent, dtype=np.float64)
        if arr.shape != (self.dim,):
            raise BackendError(f"center latent has dim {arr.shape}, expected {self.dim}")
        return arr

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            if self._proc.poll() is None and self._proc.stdin is not None:
                write_frame(self._proc.stdin, {"op": "shutdown"})
                try:
                    read_frame(self._proc.stdout)
                except ProtocolError:
                    pass  # server may exit without replying
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        except (OSError, subprocess.TimeoutExpired):
            self._kill()

    def _kill(self) -> None:
        self._closed = True
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
