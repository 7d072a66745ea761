"""Latent vectors: sampling, truncation, and the LVEC binary store.

A latent vector is a plain 1-D ``numpy.ndarray`` of float64. ``LatentSet``
bundles N of them row-wise together with the seed that produced them.

Storage note: the LVEC file format holds binary32 values, so ``LatentSet``
quantizes its rows through float32 on construction. Values at rest are
therefore always exactly representable in the file format and a save/load
round trip is bit-exact; arithmetic on them still happens in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    NonFiniteDataError,
    StoreError,
    TruncatedFileError,
    VersionMismatchError,
)
from .rng import philox

LVEC_MAGIC = b"LVEC"
LVEC_VERSION = 1
_HEADER = struct.Struct("<4sIII")  # magic, version, count, dim


def _as_vector(values, name: str = "vector") -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-D array")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


@dataclass(frozen=True)
class LatentSet:
    """Ordered rows of latent vectors sharing one dimension.

    ``seed`` records the sampling seed, or 0 when the set was loaded from a
    file rather than drawn.
    """

    rows: np.ndarray
    seed: int = 0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ValueError("rows must be a non-empty 2-D array")
        if not np.all(np.isfinite(rows)):
            raise ValueError("latent rows contain non-finite entries")
        # Quantize through binary32 so the LVEC store round-trips bit-exactly.
        rows = rows.astype(np.float32).astype(np.float64)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class TruncationParams:
    """Interpolation factor ``psi`` and the center-of-mass vector."""

    psi: float
    center: np.ndarray

    def __post_init__(self):
        if not (0.0 <= float(self.psi) <= 1.0):
            raise ValueError(f"psi must lie in [0, 1], got {self.psi}")
        object.__setattr__(self, "center", _as_vector(self.center, "center"))


def sample_latents(count: int, dim: int, seed: int) -> LatentSet:
    """Draw ``count`` i.i.d. standard-normal latents of dimension ``dim``.

    Identical (count, dim, seed) triples produce bit-identical sets on every
    platform; see :mod:`latentwalk.rng` for the generator contract.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rows = philox(seed).standard_normal((count, dim))
    return LatentSet(rows=rows, seed=seed)


def mean_latent(latents: LatentSet) -> np.ndarray:
    """Coordinate-wise arithmetic mean of the rows."""
    return latents.rows.mean(axis=0)


def truncate_latent(w: np.ndarray, params: TruncationParams) -> np.ndarray:
    """Pull ``w`` toward the center: ``center + psi * (w - center)``."""
    w = _as_vector(w, "w")
    if w.shape != params.center.shape:
        raise ValueError(
            f"dim mismatch: latent has {w.shape[0]}, center has {params.center.shape[0]}"
        )
    return params.center + params.psi * (w - params.center)


def truncate_set(latents: LatentSet, params: TruncationParams) -> LatentSet:
    """Truncate every row; the sampling seed is carried over."""
    if latents.dim != params.center.shape[0]:
        raise ValueError(
            f"dim mismatch: set has {latents.dim}, center has {params.center.shape[0]}"
        )
    rows = params.center + params.psi * (latents.rows - params.center)
    return LatentSet(rows=rows, seed=latents.seed)


def save_latents(latents: LatentSet, path) -> None:
    """Write the LVEC binary format.

    Layout (little-endian): magic ``LVEC``, u32 version=1, u32 count,
    u32 dim, then count*dim IEEE-754 binary32 values row-major. No padding,
    no trailer.
    """
    payload = latents.rows.astype("<f4").tobytes()
    header = _HEADER.pack(LVEC_MAGIC, LVEC_VERSION, latents.count, latents.dim)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_latents(path) -> LatentSet:
    """Read an LVEC file; malformed files raise a distinct StoreError subtype."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than the LVEC header")
    magic, version, count, dim = _HEADER.unpack_from(raw)
    if magic != LVEC_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != LVEC_VERSION:
        raise VersionMismatchError(f"{path}: unsupported LVEC version {version}")
    if count < 1 or dim < 1:
        raise StoreError(f"{path}: invalid count={count} dim={dim}")
    expected = count * dim * 4
    body = raw[_HEADER.size :]
    if len(body) < expected:
        raise TruncatedFileError(
            f"{path}: payload holds {len(body)} bytes, header declares {expected}"
        )
    if len(body) > expected:
        raise StoreError(f"{path}: {len(body) - expected} trailing bytes after payload")
    values = np.frombuffer(body, dtype="<f4").reshape(count, dim)
    if not np.all(np.isfinite(values)):
        raise NonFiniteDataError(f"{path}: payload contains non-finite entries")
    return LatentSet(rows=values.astype(np.float64), seed=0)
