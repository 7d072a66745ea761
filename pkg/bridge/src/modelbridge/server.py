"""The request loop: hello, generate, embed, center, shutdown.

Single-threaded, one request in flight. Every reply is a well-formed frame;
unknown ops answer ``{"ok": false, "error": "unsupported"}``. A model that
fails to load still answers the handshake (with an error) before the process
exits, so the client sees a reason instead of a dead pipe.
"""

from __future__ import annotations

import sys

import numpy as np

from .config import BridgeConfig, ModelLoadError, load_factory
from .frames import FrameError, read_frame, write_frame
from .toymodel import EchoToyModel, ZeroEmbedding

PROTOCOL_VERSION = 1

METADATA_FIELDS = ("ied_px", "yaw_deg", "pitch_deg", "age_years", "illum")

# estimator name -> metadata fields it fills
_ESTIMATOR_FIELDS = {
    "pose": ("yaw_deg", "pitch_deg"),
    "age": ("age_years",),
    "ied": ("ied_px",),
    "illum": ("illum",),
}


class EchoBackend:
    """Serves the analytic echo model; metadata is always fully populated."""

    def __init__(self, model: EchoToyModel):
        self.model = model
        self.latents: dict[str, np.ndarray] = {}

    def generate(self, sample_id: str, w: np.ndarray) -> dict:
        self.latents[sample_id] = w
        return {
            "ok": True,
            "id": sample_id,
            "metadata": self.model.metadata(w),
            "image_uri": None,
        }

    def embed(self, sample_id: str) -> dict:
        if sample_id not in self.latents:
            return {"ok": False, "error": f"unknown id {sample_id!r}"}
        try:
            values = self.model.embedding(self.latents[sample_id])
        except ZeroEmbedding as exc:
            return {"ok": False, "error": str(exc)}
        return {"ok": True, "embedding": [float(x) for x in values]}

    def center(self) -> dict:
        return {"ok": True, "latent": None}


class RealBackend:
    """Wraps loaded generator/embedder/estimator objects.

    Duck-typed model surface:

    * generator: ``generate(latent) -> (image, image_uri_or_None)``
    * embedder:  ``embed(image) -> 1-D vector`` (normalized here)
    * estimator: ``estimate(image) -> {field: value}``

    Metadata starts all-null; each configured estimator fills its fields.
    """

    def __init__(self, config: BridgeConfig):
        if not config.generator or not config.embedder:
            raise ModelLoadError("config must name both a generator and an embedder")
        self.generator = load_factory(config.generator, config.device)
        self.embedder = load_factory(config.embedder, config.device)
        self.estimators = {
            name: load_factory(locator, config.device)
            for name, locator in sorted(config.estimators.items())
            if name != "quality"
        }
        self.quality = (
            load_factory(config.estimators["quality"], config.device)
            if "quality" in config.estimators
            else None
        )
        self.images: dict[str, object] = {}

    def generate(self, sample_id: str, w: np.ndarray) -> dict:
        image, image_uri = self.generator.generate(w)
        self.images[sample_id] = image
        metadata = {name: None for name in METADATA_FIELDS}
        for name, estimator in self.estimators.items():
            estimated = estimator.estimate(image)
            for field in _ESTIMATOR_FIELDS.get(name, ()):
                if field in estimated:
                    metadata[field] = float(estimated[field])
            for field, value in estimated.items():
                if field in metadata and metadata[field] is None:
                    metadata[field] = float(value)
        reply = {"ok": True, "id": sample_id, "metadata": metadata, "image_uri": image_uri}
        if self.quality is not None:
            scores = self.quality.estimate(image)
            reply["quality"] = {str(k): float(v) for k, v in scores.items()}
        return reply

    def embed(self, sample_id: str) -> dict:
        if sample_id not in self.images:
            return {"ok": False, "error": f"unknown id {sample_id!r}"}
        values = np.asarray(self.embedder.embed(self.images[sample_id]), dtype=np.float64)
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            return {"ok": False, "error": "embedder returned a zero vector"}
        return {"ok": True, "embedding": [float(x) for x in values / norm]}

    def center(self) -> dict:
        center = getattr(self.generator, "latent_center", None)
        if center is None:
            return {"ok": True, "latent": None}
        return {"ok": True, "latent": [float(x) for x in np.asarray(center)]}


def serve(config: BridgeConfig, echo_seed: int | None = None) -> int:
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    backend = None
    load_error = None
    if echo_seed is None:
        try:
            backend = RealBackend(config)
        except ModelLoadError as exc:
            load_error = str(exc)

    try:
        hello = read_frame(stdin)
    except FrameError as exc:
        print(f"model-bridge: bad handshake frame: {exc}", file=sys.stderr)
        return 1
    if hello is None:
        return 1
    if hello.get("op") != "hello":
        write_frame(stdout, {"ok": False, "error": "expected hello"})
        return 1
    if load_error is not None:
        write_frame(stdout, {"ok": False, "error": load_error})
        return 1
    if hello.get("version") != PROTOCOL_VERSION:
        write_frame(
            stdout,
            {"ok": False, "error": f"unsupported protocol version {hello.get('version')!r}"},
        )
        return 1
    try:
        dim = int(hello["dim"])
        embed_dim = int(hello["embed_dim"])
        if dim < 1 or embed_dim < 1:
            raise ValueError
    except (KeyError, TypeError, ValueError):
        write_frame(stdout, {"ok": False, "error": "hello must carry positive dim/embed_dim"})
        return 1
    if config.dim is not None and config.dim != dim:
        write_frame(
            stdout, {"ok": False, "error": f"bridge serves dim {config.dim}, client asked {dim}"}
        )
        return 1
    if config.embed_dim is not None and config.embed_dim != embed_dim:
        write_frame(
            stdout,
            {
                "ok": False,
                "error": f"bridge serves embed_dim {config.embed_dim}, client asked {embed_dim}",
            },
        )
        return 1
    if echo_seed is not None:
        backend = EchoBackend(EchoToyModel(echo_seed, dim, embed_dim))
    write_frame(stdout, {"ok": True, "version": PROTOCOL_VERSION})

    while True:
        try:
            request = read_frame(stdin)
        except FrameError as exc:
            print(f"model-bridge: bad frame: {exc}", file=sys.stderr)
            return 1
        if request is None:
            return 0  # client went away without shutdown
        op = request.get("op")
        if op == "shutdown":
            write_frame(stdout, {"ok": True})
            return 0
        if op == "generate":
            latent = request.get("latent")
            sample_id = request.get("id")
            if not isinstance(latent, list) or len(latent) != dim or sample_id is None:
                write_frame(
                    stdout,
                    {"ok": False, "error": f"generate needs id and a latent of length {dim}"},
                )
                continue
            w = np.asarray([float(x) for x in latent], dtype=np.float64)
            if not np.all(np.isfinite(w)):
                write_frame(stdout, {"ok": False, "error": "latent has non-finite entries"})
                continue
            write_frame(stdout, backend.generate(str(sample_id), w))
        elif op == "embed":
            write_frame(stdout, backend.embed(str(request.get("id"))))
        elif op == "center":
            write_frame(stdout, backend.center())
        else:
            write_frame(stdout, {"ok": False, "error": "unsupported"})
