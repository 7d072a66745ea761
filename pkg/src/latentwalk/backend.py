"""Generator + embedder sessions.

Two backends sit behind one duck-typed session surface:

* ``ToySession``: an in-process linear-then-normalize model with analytic
  metadata, so walk behavior has closed forms the tests can verify.
* ``ExternalSession`` (:mod:`latentwalk.protocol`): a wire-protocol client
  driving a child process that wraps real models.

Toy model definition (all draws from one Philox stream keyed by the session
seed, in this order):

1. ``B``: dense (embed_dim, dim) standard-normal matrix.
2. ``G``: five standard-normal rows of length dim, normalized to unit
   length, in the order yaw, pitch, age, ied, illum.

Then ``embedding(w) = B w / ||B w||`` and the metadata fields are::

    yaw_deg   = 30 * <g_yaw, w>
    pitch_deg = 30 * <g_pitch, w>
    age_years = 35 + 12 * <g_age, w>
    ied_px    = 100 + 20 * <g_ied, w>
    illum     = 1 / (1 + exp(-<g_illum, w>))

The external bridge's echo mode replays this construction verbatim.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import BackendError, ZeroEmbeddingError
from .rng import digest64, philox

METADATA_FIELDS = ("ied_px", "yaw_deg", "pitch_deg", "age_years", "illum")


@dataclass(frozen=True)
class SampleMetadata:
    """Per-sample capture attributes; ``None`` means the estimator was absent."""

    ied_px: float | None
    yaw_deg: float | None
    pitch_deg: float | None
    age_years: float | None
    illum: float | None

    def __post_init__(self):
        for name in METADATA_FIELDS:
            value = getattr(self, name)
            if value is None:
                continue
            value = float(value)
            if not np.isfinite(value):
                raise ValueError(f"metadata field {name} is not finite")
            object.__setattr__(self, name, value)
        if self.illum is not None and not (0.0 <= self.illum <= 1.0):
            raise ValueError(f"illum must lie in [0, 1], got {self.illum}")
        if self.ied_px is not None and self.ied_px < 0:
            raise ValueError("ied_px must be nonnegative")
        if self.age_years is not None and self.age_years < 0:
            raise ValueError("age_years must be nonnegative")

    def complete(self) -> bool:
        return all(getattr(self, name) is not None for name in METADATA_FIELDS)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in METADATA_FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> "SampleMetadata":
        return cls(**{name: data.get(name) for name in METADATA_FIELDS})


@dataclass(frozen=True)
class SampleRef:
    """Handle for one generated sample; the image itself stays backend-side."""

    id: str
    latent_hash: int
    metadata: SampleMetadata
    image_uri: str | None = None
    quality: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Embedding:
    """Unit-norm identity feature vector."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("embedding must be 1-D")
        norm = float(np.linalg.norm(values))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"embedding norm {norm} is not 1 within 1e-9")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def similarity(a: Embedding, b: Embedding) -> float:
    """Cosine similarity of two unit embeddings, clamped to [-1, 1]."""
    if a.dim != b.dim:
        raise ValueError(f"embedding dim mismatch: {a.dim} vs {b.dim}")
    return float(min(1.0, max(-1.0, float(a.values @ b.values))))


def verify(a: Embedding, b: Embedding, threshold: float) -> bool:
    """Accept iff similarity >= threshold. Threshold must lie in (-1, 1]."""
    if not (-1.0 < threshold <= 1.0):
        raise ValueError(f"threshold must lie in (-1, 1], got {threshold}")
    return similarity(a, b) >= threshold


@dataclass(frozen=True)
class ToyBackendConfig:
    seed: int
    dim: int
    embed_dim: int

    def __post_init__(self):
        if self.dim < 1 or self.embed_dim < 1:
            raise ValueError("dim and embed_dim must be >= 1")


@dataclass(frozen=True)
class ExternalBackendConfig:
    command: tuple[str, ...]
    dim: int
    embed_dim: int

    def __post_init__(self):
        if not self.command:
            raise ValueError("external backend needs a non-empty command")
        if self.dim < 1 or self.embed_dim < 1:
            raise ValueError("dim and embed_dim must be >= 1")
        object.__setattr__(self, "command", tuple(str(c) for c in self.command))


def toy_model_arrays(config: ToyBackendConfig) -> tuple[np.ndarray, np.ndarray]:
    """Draw (B, G) for the toy model; the documented construction."""
    gen = philox(config.seed)
    b = gen.standard_normal((config.embed_dim, config.dim))
    g = gen.standard_normal((5, config.dim))
    g = g / np.linalg.norm(g, axis=1, keepdims=True)
    return b, g


def latent_digest(w: np.ndarray) -> int:
    return digest64(np.asarray(w, dtype="<f8").tobytes())


class ToySession:
    """Analytic in-process backend; see the module docstring for the model."""

    backend_kind = "toy"

    def __init__(self, config: ToyBackendConfig):
        self.config = config
        self.dim = config.dim
        self.embed_dim = config.embed_dim
        self._b, self._g = toy_model_arrays(config)
        self._latents: dict[str, np.ndarray] = {}
        self._auto_ids = itertools.count()

    def _check_latent(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"latent has shape {w.shape}, session dim is {self.dim}")
        return w

    def metadata_for(self, w: np.ndarray) -> SampleMetadata:
        w = self._check_latent(w)
        dots = self._g @ w
        return SampleMetadata(
            yaw_deg=30.0 * dots[0],
            pitch_deg=30.0 * dots[1],
            age_years=max(0.0, 35.0 + 12.0 * dots[2]),
            ied_px=max(0.0, 100.0 + 20.0 * dots[3]),
            illum=float(1.0 / (1.0 + np.exp(-dots[4]))),
        )

    def generate(self, w: np.ndarray, sample_id: str | None = None) -> SampleRef:
        w = self._check_latent(w)
        if sample_id is None:
            sample_id = f"t{next(self._auto_ids):06d}"
        self._latents[sample_id] = w.copy()
        return SampleRef(
            id=sample_id,
            latent_hash=latent_digest(w),
            metadata=self.metadata_for(w),
            image_uri=None,
        )

    def embed(self, ref: SampleRef) -> Embedding:
        if ref.id not in self._latents:
            raise BackendError(f"unknown sample ref {ref.id!r}")
        z = self._b @ self._latents[ref.id]
        norm = float(np.linalg.norm(z))
        if norm == 0.0:
            raise ZeroEmbeddingError(f"latent for {ref.id!r} maps to the zero vector")
        return Embedding(values=z / norm)

    def center(self) -> np.ndarray | None:
        """The toy model has no learned center-of-mass override."""
        return None

    def close(self) -> None:
        self._latents.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def toy_quality(meta: SampleMetadata) -> float:
    """Synthetic utility score in [0, 100]: peaks at frontal pose, mid illumination.

    Purely a desk-scale stand-in for an external quality estimator; real runs
    ingest scores from the manifest instead.
    """
    if not meta.complete():
        raise ValueError("toy quality needs complete metadata")
    pose = (meta.yaw_deg**2 + meta.pitch_deg**2) / (2.0 * 30.0**2)
    light = (meta.illum - 0.5) ** 2 / (2.0 * 0.25**2)
    return float(100.0 * np.exp(-(pose + light)))


def open_session(config):
    """Factory over the two backend kinds."""
    if isinstance(config, ToyBackendConfig):
        return ToySession(config)
    if isinstance(config, ExternalBackendConfig):
        from .protocol import ExternalSession

        return ExternalSession(config)
    raise ValueError(f"unsupported backend config type {type(config)!r}")
