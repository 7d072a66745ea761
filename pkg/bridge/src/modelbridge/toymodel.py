"""Echo-mode analytic model.

This replays, step for step, the client toolkit's documented toy
construction so that a bridge in echo mode is numerically indistinguishable
from the client's in-process backend. Keep it in sync with that spec:

* One Philox4x64-10 generator keyed directly by the seed.
* ``B``: standard-normal (embed_dim, dim) matrix, drawn first.
* ``G``: five standard-normal rows of length dim, drawn second, each
  normalized to unit length; row order yaw, pitch, age, ied, illum.
* ``embedding(w) = B w / ||B w||``; a zero product is an error.
* Metadata::

      yaw_deg   = 30 * <g_yaw, w>
      pitch_deg = 30 * <g_pitch, w>
      age_years = max(0, 35 + 12 * <g_age, w>)
      ied_px    = max(0, 100 + 20 * <g_ied, w>)
      illum     = 1 / (1 + exp(-<g_illum, w>))
"""

from __future__ import annotations

import numpy as np


class ZeroEmbedding(Exception):
    pass


class EchoToyModel:
    def __init__(self, seed: int, dim: int, embed_dim: int):
        self.dim = dim
        self.embed_dim = embed_dim
        gen = np.random.Generator(np.random.Philox(key=seed & ((1 << 64) - 1)))
        self.b = gen.standard_normal((embed_dim, dim))
        g = gen.standard_normal((5, dim))
        self.g = g / np.linalg.norm(g, axis=1, keepdims=True)

    def metadata(self, w: np.ndarray) -> dict:
        dots = self.g @ w
        return {
            "ied_px": float(max(0.0, 100.0 + 20.0 * dots[3])),
            "yaw_deg": float(30.0 * dots[0]),
            "pitch_deg": float(30.0 * dots[1]),
            "age_years": float(max(0.0, 35.0 + 12.0 * dots[2])),
            "illum": float(1.0 / (1.0 + np.exp(-dots[4]))),
        }

    def embedding(self, w: np.ndarray) -> np.ndarray:
        z = self.b @ w
        norm = float(np.linalg.norm(z))
        if norm == 0.0:
            raise ZeroEmbedding("latent maps to the zero vector")
        return z / norm
