"""Biometric evaluation: score sets, FMR/FNMR thresholds, KDE, KL, EDC.

Conventions fixed here and relied on throughout:

* FNMR at threshold t counts mated scores strictly below t; FMR counts
  non-mated scores at or above t (matching the verifier's >= accept rule).
* ``threshold_at_fmr`` returns the smallest candidate threshold meeting the
  target, candidates being the score values themselves plus, when ties make
  every score value overshoot, the next representable float above a score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backend import similarity
from .errors import DataError, DegenerateDistributionError, DisjointSupportError
from .rng import philox

KL_DENSITY_FLOOR = 1e-12

# numpy renamed trapz to trapezoid in 2.0
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class ScoreSets:
    """Mated and non-mated comparison scores plus pairing diagnostics.

    ``mated_ids`` names the mated record behind each mated score, index
    aligned with ``mated``.
    """

    mated: list[float]
    nonmated: list[float]
    pairing_seed: int
    skipped_subjects: int = 0
    shortfall: int = 0
    mated_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        for name in ("mated", "nonmated"):
            scores = [float(s) for s in getattr(self, name)]
            for s in scores:
                if not (-1.0 <= s <= 1.0):
                    raise DataError(f"{name} score {s} outside [-1, 1]")
            setattr(self, name, scores)


@dataclass(frozen=True)
class DensityCurve:
    """Kernel density estimate sampled on a strictly increasing grid."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        density = np.asarray(self.density, dtype=np.float64)
        if grid.ndim != 1 or grid.shape != density.shape or grid.size < 2:
            raise ValueError("grid and density must be matching 1-D arrays")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(density < 0):
            raise ValueError("density must be nonnegative")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        mass = float(_trapezoid(density, grid))
        if abs(mass - 1.0) > 1e-3:
            raise ValueError(f"density integrates to {mass}, not 1 within 1e-3")
        grid.setflags(write=False)
        density.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)


@dataclass(frozen=True)
class EDCCurve:
    """FNMR after discarding the lowest-quality fraction of comparisons."""

    discard_fractions: tuple[float, ...]
    fnmr: tuple[float, ...]
    threshold_used: float


def fnmr_at(mated, t: float) -> float:
    """Fraction of mated scores strictly below ``t``."""
    scores = np.asarray(mated, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("mated scores must be non-empty")
    return float(np.count_nonzero(scores < t) / scores.size)


def fmr_at(nonmated, t: float) -> float:
    """Fraction of non-mated scores at or above ``t``."""
    scores = np.asarray(nonmated, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("nonmated scores must be non-empty")
    return float(np.count_nonzero(scores >= t) / scores.size)


def threshold_at_fmr(nonmated, target_fmr: float) -> float:
    """Smallest threshold whose FMR on ``nonmated`` is at most ``target_fmr``.

    Candidates are scanned in ascending order: each distinct score value,
    then the next representable float above it (the tie-breaking bump).
    When even the full score range is acceptable, the minimum score is
    returned (degenerate full-acceptance case).
    """
    scores = np.asarray(nonmated, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("nonmated scores must be non-empty")
    if not (0.0 < target_fmr < 1.0):
        raise ValueError(f"target_fmr must lie in (0, 1), got {target_fmr}")
    n = scores.size
    allowed = target_fmr * n  # accept count must be <= this
    sorted_scores = np.sort(scores)
    unique = np.unique(sorted_scores)
    if n <= allowed:
        return float(unique[0])
    for value in unique:
        # scores >= value, via the sorted array
        at_or_above = n - int(np.searchsorted(sorted_scores, value, side="left"))
        if at_or_above <= allowed:
            return float(value)
    # Ties block every score value; bump just above the lowest score that works.
    for value in unique:
        strictly_above = n - int(np.searchsorted(sorted_scores, value, side="right"))
        if strictly_above <= allowed:
            return math.nextafter(float(value), math.inf)
    raise AssertionError("unreachable: the bump above the maximum always qualifies")


def paired_quality(q1: float, q2: float) -> float:
    """Quality of a comparison pair: the minimum of the two sample scores."""
    for q in (q1, q2):
        if not (0.0 <= q <= 100.0):
            raise ValueError(f"quality score {q} outside [0, 100]")
    return min(q1, q2)


def edc_curve(pairs, t: float, fractions) -> EDCCurve:
    """Error-vs-discard curve at threshold ``t``.

    ``pairs`` holds (paired_quality, mated_score) tuples. For each discard
    fraction d, the floor(d*N) lowest-quality pairs go (ties broken by input
    order) and FNMR is recomputed on the remainder.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("pairs must be non-empty")
    fractions = [float(d) for d in fractions]
    if any(not (0.0 <= d < 1.0) for d in fractions):
        raise ValueError("fractions must lie in [0, 1)")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ValueError("fractions must be strictly increasing")
    qualities = np.asarray([q for q, _ in pairs], dtype=np.float64)
    scores = np.asarray([s for _, s in pairs], dtype=np.float64)
    order = np.argsort(qualities, kind="stable")  # ascending; stable for ties
    n = len(pairs)
    fnmrs = []
    for d in fractions:
        drop = int(d * n)
        retained = order[drop:]
        if retained.size == 0:
            raise DataError(f"discard fraction {d} retains zero pairs")
        fnmrs.append(fnmr_at(scores[retained], t))
    return EDCCurve(
        discard_fractions=tuple(fractions), fnmr=tuple(fnmrs), threshold_used=float(t)
    )


def silverman_bandwidth(samples: np.ndarray) -> float:
    sigma = float(np.std(samples, ddof=1))
    return 1.06 * sigma * samples.size ** (-1.0 / 5.0)


def kde(samples, grid_points: int = 512) -> DensityCurve:
    """Gaussian-kernel density with the 1.06-sigma Silverman bandwidth.

    The grid spans [min - 3h, max + 3h]; the curve is renormalized so its
    trapezoidal integral is exactly 1.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 2:
        raise ValueError("kde needs at least 2 samples")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    h = silverman_bandwidth(samples)
    if h <= 0:
        raise DegenerateDistributionError("samples have zero spread")
    grid = np.linspace(samples.min() - 3.0 * h, samples.max() + 3.0 * h, grid_points)
    z = (grid[:, None] - samples[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (samples.size * h * np.sqrt(2.0 * np.pi))
    density = density / _trapezoid(density, grid)
    return DensityCurve(grid=grid, density=density, bandwidth=h)


def kl_divergence(p: DensityCurve, q: DensityCurve) -> float:
    """Trapezoidal KL(p || q) on a shared grid.

    Both curves are linearly re-sampled onto the union span with the larger
    of the two point counts; q is floored at 1e-12 before the log and grid
    cells where p sits below the same floor contribute nothing.
    """
    lo_overlap = max(p.grid[0], q.grid[0])
    hi_overlap = min(p.grid[-1], q.grid[-1])
    if hi_overlap <= lo_overlap:
        raise DisjointSupportError("density curves share no grid overlap")
    lo = min(p.grid[0], q.grid[0])
    hi = max(p.grid[-1], q.grid[-1])
    points = max(p.grid.size, q.grid.size)
    grid = np.linspace(lo, hi, points)
    pv = np.interp(grid, p.grid, p.density, left=0.0, right=0.0)
    qv = np.maximum(np.interp(grid, q.grid, q.density, left=0.0, right=0.0), KL_DENSITY_FLOOR)
    mask = pv > KL_DENSITY_FLOOR
    integrand = np.zeros_like(pv)
    integrand[mask] = pv[mask] * np.log(pv[mask] / qv[mask])
    return float(_trapezoid(integrand, grid))


def collect_scores(
    records,
    latents_by_id,
    session,
    nonmated_pairs_per_subject: int,
    pairing_seed: int,
) -> ScoreSets:
    """Mated and non-mated comparison scores over accepted records.

    Mated scores compare each subject's base against its own mated samples.
    Non-mated scores pair each subject's base embedding against
    ``nonmated_pairs_per_subject`` records drawn without replacement from
    other subjects, deterministically from ``pairing_seed``. Subjects whose
    base record is absent are skipped and counted.
    """
    if nonmated_pairs_per_subject < 1:
        raise ValueError("nonmated_pairs_per_subject must be >= 1")
    records = [r for r in records if r.accepted()]
    subjects: dict[str, dict] = {}
    for record in records:
        slot = subjects.setdefault(record.subject_id, {"base": None, "mated": []})
        if record.kind == "base":
            slot["base"] = record
        else:
            slot["mated"].append(record)

    embeddings: dict[str, object] = {}

    def embed_record(record):
        if record.id not in embeddings:
            w = latents_by_id[record.id]
            embeddings[record.id] = session.embed(session.generate(w, record.id))
        return embeddings[record.id]

    skipped = 0
    mated_scores: list[float] = []
    mated_ids: list[str] = []
    subject_ids = sorted(subjects)
    usable: list[str] = []
    for sid in subject_ids:
        slot = subjects[sid]
        if slot["base"] is None:
            skipped += 1
            continue
        usable.append(sid)
        base_emb = embed_record(slot["base"])
        for record in slot["mated"]:
            mated_scores.append(similarity(base_emb, embed_record(record)))
            mated_ids.append(record.id)

    gen = philox(pairing_seed)
    nonmated_scores: list[float] = []
    shortfall = 0
    all_records = {sid: [subjects[sid]["base"]] + subjects[sid]["mated"] for sid in usable}
    for sid in usable:
        pool = [r for other in usable if other != sid for r in all_records[other]]
        take = min(nonmated_pairs_per_subject, len(pool))
        shortfall += nonmated_pairs_per_subject - take
        if take == 0:
            continue
        picks = gen.choice(len(pool), size=take, replace=False)
        base_emb = embed_record(subjects[sid]["base"])
        for idx in sorted(int(i) for i in picks):
            nonmated_scores.append(similarity(base_emb, embed_record(pool[idx])))

    return ScoreSets(
        mated=mated_scores,
        nonmated=nonmated_scores,
        pairing_seed=pairing_seed,
        skipped_subjects=skipped,
        shortfall=shortfall,
        mated_ids=mated_ids,
    )
