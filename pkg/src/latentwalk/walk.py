"""Identity-constrained walks along principal components.

The walk shifts a base latent step by step along one direction, regenerates
the sample, and keeps going while the face-recognition oracle still verifies
it against the base. Two save policies exist: ``every_step`` keeps every
verified step, ``furthest`` keeps only the last one per direction (one mated
sample per direction, the dataset-building default).

The module also carries linear-boundary editing (fit a separating hyperplane
on labeled latents, then shift perpendicular to it), used to build
single-attribute comparison datasets.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .backend import Embedding, SampleRef, similarity, verify
from .latents import LatentSet
from .pca import PrincipalBasis

SAVE_POLICIES = ("every_step", "furthest")


@dataclass(frozen=True)
class WalkConfig:
    """Step size, accept threshold, and the directions to walk.

    ``directions`` lists (component index, sign) pairs; component indices are
    1-based, so ``(1, +1)`` walks along the first principal component.
    ``max_steps`` bounds the loop when similarity never drops below the
    threshold.
    """

    step_size: float = 0.2
    threshold: float = 0.8
    max_steps: int = 200
    directions: tuple[tuple[int, int], ...] = ((1, +1), (2, +1))
    save_policy: str = "furthest"

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if not (-1.0 < self.threshold <= 1.0):
            raise ValueError(f"threshold must lie in (-1, 1], got {self.threshold}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.save_policy not in SAVE_POLICIES:
            raise ValueError(f"save_policy must be one of {SAVE_POLICIES}")
        directions = tuple((int(c), int(s)) for c, s in self.directions)
        if not directions:
            raise ValueError("directions must be non-empty")
        for comp, sign in directions:
            if comp < 1:
                raise ValueError(f"component indices are 1-based, got {comp}")
            if sign not in (-1, 1):
                raise ValueError(f"direction sign must be +1 or -1, got {sign}")
        object.__setattr__(self, "directions", directions)


@dataclass(frozen=True)
class MatedRecord:
    """One saved walk step: lineage, distance, and the verified sample."""

    base_id: str
    direction: tuple[int, int]
    steps: int
    distance: float
    latent: np.ndarray
    similarity_to_base: float
    sample: SampleRef
    truncated: bool = False  # direction hit max_steps while still verified


def shift_in_lspace(w: np.ndarray, c: np.ndarray, distance: float) -> np.ndarray:
    """Move ``w`` by ``distance`` along the unit direction ``c``."""
    w = np.asarray(w, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if w.shape != c.shape:
        raise ValueError(f"dim mismatch: {w.shape} vs {c.shape}")
    norm = float(np.linalg.norm(c))
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"direction must be unit length, got norm {norm}")
    return w + distance * c


def guided_walk(
    session,
    w: np.ndarray,
    basis: PrincipalBasis,
    cfg: WalkConfig,
    base_id: str | None = None,
) -> list[MatedRecord]:
    """Walk ``w`` along each configured direction until verification fails.

    The base is generated and embedded once; every step i regenerates
    ``w + (i * step_size) * (sign * c)`` from the base, so steps are exact
    multiples of ``step_size``. A direction whose first step already fails
    contributes no records.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (session.dim,):
        raise ValueError(f"latent has shape {w.shape}, session dim is {session.dim}")
    if basis.dim != session.dim:
        raise ValueError(f"basis dim {basis.dim} does not match session dim {session.dim}")
    for comp, _ in cfg.directions:
        if comp > basis.k:
            raise ValueError(f"direction asks for component {comp}, basis has {basis.k}")

    base_ref = session.generate(w, base_id)
    base_emb: Embedding = session.embed(base_ref)

    records: list[MatedRecord] = []
    for comp, sign in cfg.directions:
        c = sign * basis.components[comp - 1]
        tag = f"{base_ref.id}-pc{comp}{'+' if sign > 0 else '-'}"
        kept: list[MatedRecord] = []
        truncated = False
        for i in range(1, cfg.max_steps + 1):
            distance = cfg.step_size * i
            w_moved = shift_in_lspace(w, c, distance)
            ref = session.generate(w_moved, f"{tag}-s{i:03d}")
            emb = session.embed(ref)
            sim = similarity(base_emb, emb)
            if not verify(base_emb, emb, cfg.threshold):
                break
            kept.append(
                MatedRecord(
                    base_id=base_ref.id,
                    direction=(comp, sign),
                    steps=i,
                    distance=distance,
                    latent=w_moved,
                    similarity_to_base=sim,
                    sample=ref,
                )
            )
        else:
            truncated = bool(kept)
        if not kept:
            continue
        if cfg.save_policy == "furthest":
            kept = [kept[-1]]
        if truncated:
            kept[-1] = replace(kept[-1], truncated=True)
        records.extend(kept)
    return records


@dataclass(frozen=True)
class Hyperplane:
    """Separating plane ``{x : <normal, x> + offset = 0}`` with unit normal."""

    normal: np.ndarray
    offset: float
    converged: bool = True

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=np.float64)
        norm = float(np.linalg.norm(normal))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"normal must be unit length, got norm {norm}")
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)


def signed_distance(w: np.ndarray, h: Hyperplane) -> float:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != h.normal.shape:
        raise ValueError(f"dim mismatch: {w.shape} vs {h.normal.shape}")
    return float(h.normal @ w + h.offset)


def fit_linear_boundary(
    latents: LatentSet,
    labels,
    iterations: int = 100_000,
    l2: float = 1e-3,
) -> Hyperplane:
    """Max-margin-style separating hyperplane via full-batch hinge subgradient.

    Deterministic by construction: weights start at zero, the full batch is
    used every step, and the learning rate follows the fixed 1/sqrt(t)
    schedule. The default budget of 1e5 iterations brings separable 2-D
    problems within 1e-3 of the grid-searched max-margin direction. The
    normal is oriented toward the label-1 class. ``converged`` is False when
    some training point is still misclassified after the iteration budget
    (best-effort result on non-separable data).
    """
    labels = np.asarray(labels)
    if labels.shape != (latents.count,):
        raise ValueError(f"labels must have shape ({latents.count},)")
    classes = np.unique(labels)
    if len(classes) != 2:
        raise ValueError(f"need exactly two classes, got {classes!r}")
    y = np.where(labels == classes.max(), 1.0, -1.0)
    x = latents.rows

    v = np.zeros(latents.dim)
    b = 0.0
    for t in range(1, iterations + 1):
        margins = y * (x @ v + b)
        violating = margins < 1.0
        lr = 1.0 / np.sqrt(t)
        if np.any(violating):
            grad_v = l2 * v - (y[violating, None] * x[violating]).mean(axis=0)
            grad_b = -y[violating].mean()
        else:
            grad_v = l2 * v
            grad_b = 0.0
        v = v - lr * grad_v
        b = b - lr * grad_b

    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("training collapsed to a zero normal; classes may coincide")
    normal = v / norm
    offset = b / norm
    converged = bool(np.all(y * (x @ normal + offset) > 0.0))
    return Hyperplane(normal=normal, offset=offset, converged=converged)


def shift_along_boundary(w: np.ndarray, h: Hyperplane, distance: float) -> np.ndarray:
    """Move ``w`` perpendicular to the boundary; its signed distance changes
    by exactly ``distance``."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != h.normal.shape:
        raise ValueError(f"dim mismatch: {w.shape} vs {h.normal.shape}")
    return w + distance * h.normal
