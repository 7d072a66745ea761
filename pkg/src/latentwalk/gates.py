"""Quality gates over sample metadata and dataset-level filtering.

Gate semantics: boundary values pass (inclusive comparisons); a metadata
field of ``None`` means no estimator ran, which passes the gate but is
flagged in the verdict's ``missing`` set. A mated sample whose base was
rejected is itself rejected with the distinct reason ``"base"`` regardless
of its own metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .backend import SampleMetadata
from .errors import DataError

REASON_IED = "ied"
REASON_ILLUMINATION = "illumination"
REASON_YAW = "yaw"
REASON_PITCH = "pitch"
REASON_AGE = "age"
REASON_BASE_REJECTED = "base"

GATE_REASONS = (REASON_IED, REASON_ILLUMINATION, REASON_YAW, REASON_PITCH, REASON_AGE)


@dataclass(frozen=True)
class GateConfig:
    """Numeric bounds for the capture-quality gates.

    Defaults are declared desk-scale conventions, overridable from the run
    config; they are not published operating points.
    """

    min_ied_px: float = 90.0
    max_abs_yaw_deg: float = 15.0
    max_abs_pitch_deg: float = 15.0
    illum_min: float = 0.2
    illum_max: float = 0.8
    age_min: float = 18.0
    age_max: float = 70.0

    def __post_init__(self):
        if self.illum_min > self.illum_max:
            raise ValueError("illum_min must not exceed illum_max")
        if self.age_min > self.age_max:
            raise ValueError("age_min must not exceed age_max")
        for name in ("min_ied_px", "max_abs_yaw_deg", "max_abs_pitch_deg", "age_min", "age_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("illum_min", "illum_max"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class GateVerdict:
    """Outcome of the gates; ``passed`` iff ``reasons`` is empty."""

    passed: bool
    reasons: frozenset = frozenset()
    missing: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "reasons", frozenset(self.reasons))
        object.__setattr__(self, "missing", frozenset(self.missing))
        if self.passed != (len(self.reasons) == 0):
            raise ValueError("passed must equal reasons being empty")

    def to_json(self) -> dict:
        doc: dict = {"passed": self.passed, "reasons": sorted(self.reasons)}
        if self.missing:
            doc["missing"] = sorted(self.missing)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "GateVerdict":
        return cls(
            passed=bool(doc["passed"]),
            reasons=frozenset(doc.get("reasons", ())),
            missing=frozenset(doc.get("missing", ())),
        )


def evaluate_gates(meta: SampleMetadata, cfg: GateConfig) -> GateVerdict:
    """Collect every violated gate; missing fields pass with a flag."""
    for name in ("ied_px", "yaw_deg", "pitch_deg", "age_years", "illum"):
        value = getattr(meta, name)
        if value is not None and not math.isfinite(value):
            raise ValueError(f"metadata field {name} is not finite")

    reasons = set()
    missing = set()
    if meta.ied_px is None:
        missing.add(REASON_IED)
    elif meta.ied_px < cfg.min_ied_px:
        reasons.add(REASON_IED)
    if meta.yaw_deg is None:
        missing.add(REASON_YAW)
    elif abs(meta.yaw_deg) > cfg.max_abs_yaw_deg:
        reasons.add(REASON_YAW)
    if meta.pitch_deg is None:
        missing.add(REASON_PITCH)
    elif abs(meta.pitch_deg) > cfg.max_abs_pitch_deg:
        reasons.add(REASON_PITCH)
    if meta.illum is None:
        missing.add(REASON_ILLUMINATION)
    elif not (cfg.illum_min <= meta.illum <= cfg.illum_max):
        reasons.add(REASON_ILLUMINATION)
    if meta.age_years is None:
        missing.add(REASON_AGE)
    elif not (cfg.age_min <= meta.age_years <= cfg.age_max):
        reasons.add(REASON_AGE)
    return GateVerdict(passed=not reasons, reasons=frozenset(reasons), missing=frozenset(missing))


@dataclass
class FilterReport:
    """Stage bookkeeping: counts in/out plus per-reason and per-kind tallies."""

    total_in: int = 0
    accepted: int = 0
    rejected: int = 0
    reason_tallies: dict = field(default_factory=dict)
    by_kind: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "total_in": self.total_in,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "reason_tallies": dict(sorted(self.reason_tallies.items())),
            "by_kind": {k: dict(v) for k, v in sorted(self.by_kind.items())},
        }

    def format_table(self) -> str:
        lines = [
            f"{'records in':<22}{self.total_in:>8}",
            f"{'accepted':<22}{self.accepted:>8}",
            f"{'rejected':<22}{self.rejected:>8}",
        ]
        for reason, count in sorted(self.reason_tallies.items()):
            lines.append(f"{'  reason ' + reason:<22}{count:>8}")
        for kind, stats in sorted(self.by_kind.items()):
            lines.append(
                f"{'  ' + kind:<22}{stats['accepted']:>8} / {stats['total']} accepted"
            )
        return "\n".join(lines)


def filter_dataset(records, cfg: GateConfig):
    """Annotate every record with a verdict and tally a :class:`FilterReport`.

    Returns (annotated records in input order, report). Mated records are
    judged on their own metadata first, then inherit rejection from their
    base. Duplicate ids and mated records whose base is absent are data
    errors.
    """
    records = list(records)
    seen: set[str] = set()
    for record in records:
        if record.id in seen:
            raise DataError(f"duplicate record id {record.id!r}")
        seen.add(record.id)

    base_verdicts: dict[str, GateVerdict] = {}
    for record in records:
        if record.kind == "base":
            base_verdicts[record.id] = evaluate_gates(record.metadata, cfg)

    report = FilterReport()
    annotated = []
    for record in records:
        verdict = evaluate_gates(record.metadata, cfg)
        if record.kind == "mated":
            base = base_verdicts.get(record.subject_id)
            if base is None:
                raise DataError(
                    f"mated record {record.id!r} references unknown base {record.subject_id!r}"
                )
            if not base.passed:
                verdict = GateVerdict(
                    passed=False,
                    reasons=verdict.reasons | {REASON_BASE_REJECTED},
                    missing=verdict.missing,
                )
        annotated.append(replace(record, verdict=verdict))
        report.total_in += 1
        if verdict.passed:
            report.accepted += 1
        else:
            report.rejected += 1
        for reason in verdict.reasons:
            report.reason_tallies[reason] = report.reason_tallies.get(reason, 0) + 1
        kind_stats = report.by_kind.setdefault(
            record.kind, {"total": 0, "accepted": 0, "rejected": 0}
        )
        kind_stats["total"] += 1
        kind_stats["accepted" if verdict.passed else "rejected"] += 1
    return annotated, report
