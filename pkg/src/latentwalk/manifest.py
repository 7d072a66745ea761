"""Run manifest: one JSON object per line, preceded by a header line.

The header is ``{"dim": ..., "manifest_version": 1, "run_id": ...}``; every
following line is one record. Unknown keys on records are preserved across
read/rewrite so external tools can annotate manifests without this library
dropping their fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .backend import SampleMetadata
from .errors import DataError
from .gates import GateVerdict

MANIFEST_VERSION = 1

KIND_BASE = "base"
KIND_MATED = "mated"

_KNOWN_KEYS = {
    "id",
    "subject_id",
    "kind",
    "metadata",
    "direction",
    "distance",
    "similarity_to_base",
    "quality",
    "verdict",
    "latent_row",
    "image_uri",
}


@dataclass
class ManifestRecord:
    """One sample with lineage, metadata, quality scores, and gate verdict."""

    id: str
    subject_id: str
    kind: str
    metadata: SampleMetadata
    direction: tuple[int, int] | None = None
    distance: float | None = None
    similarity_to_base: float | None = None
    quality: dict[str, float] | None = None
    verdict: GateVerdict | None = None
    latent_row: int | None = None
    image_uri: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (KIND_BASE, KIND_MATED):
            raise DataError(f"record {self.id!r}: unknown kind {self.kind!r}")
        lineage = (self.direction, self.distance, self.similarity_to_base)
        if self.kind == KIND_BASE and any(v is not None for v in lineage):
            raise DataError(
                f"record {self.id!r}: base records carry no direction/distance/similarity"
            )
        if self.kind == KIND_MATED and any(v is None for v in lineage):
            raise DataError(
                f"record {self.id!r}: mated records need direction, distance, and similarity"
            )
        if self.similarity_to_base is not None and not (
            -1.0 <= self.similarity_to_base <= 1.0
        ):
            raise DataError(f"record {self.id!r}: similarity outside [-1, 1]")
        if self.quality is not None:
            for method, score in self.quality.items():
                if not (0.0 <= float(score) <= 100.0):
                    raise DataError(
                        f"record {self.id!r}: quality[{method!r}]={score} outside [0, 100]"
                    )
        if self.direction is not None:
            self.direction = (int(self.direction[0]), int(self.direction[1]))

    def accepted(self) -> bool:
        return self.verdict is not None and self.verdict.passed

    def to_json(self) -> dict:
        doc = dict(self.extra)
        doc["id"] = self.id
        doc["subject_id"] = self.subject_id
        doc["kind"] = self.kind
        doc["metadata"] = self.metadata.to_dict()
        if self.direction is not None:
            doc["direction"] = list(self.direction)
        if self.distance is not None:
            doc["distance"] = self.distance
        if self.similarity_to_base is not None:
            doc["similarity_to_base"] = self.similarity_to_base
        if self.quality is not None:
            doc["quality"] = self.quality
        if self.verdict is not None:
            doc["verdict"] = self.verdict.to_json()
        if self.latent_row is not None:
            doc["latent_row"] = self.latent_row
        if self.image_uri is not None:
            doc["image_uri"] = self.image_uri
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ManifestRecord":
        extra = {k: v for k, v in doc.items() if k not in _KNOWN_KEYS}
        verdict = doc.get("verdict")
        direction = doc.get("direction")
        return cls(
            id=doc["id"],
            subject_id=doc["subject_id"],
            kind=doc["kind"],
            metadata=SampleMetadata.from_dict(doc.get("metadata") or {}),
            direction=tuple(direction) if direction is not None else None,
            distance=doc.get("distance"),
            similarity_to_base=doc.get("similarity_to_base"),
            quality=doc.get("quality"),
            verdict=GateVerdict.from_json(verdict) if verdict is not None else None,
            latent_row=doc.get("latent_row"),
            image_uri=doc.get("image_uri"),
            extra=extra,
        )


def _dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_manifest(path, header: dict, records) -> None:
    """Write header + records. ``header`` must carry dim and run_id."""
    header_doc = {
        "manifest_version": MANIFEST_VERSION,
        "dim": int(header["dim"]),
        "run_id": str(header["run_id"]),
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump(header_doc) + "\n")
        for record in records:
            fh.write(_dump(record.to_json()) + "\n")
    tmp.replace(path)


def read_manifest(path) -> tuple[dict, list[ManifestRecord]]:
    """Read and validate a manifest; duplicate ids are rejected."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise DataError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    if header.get("manifest_version") != MANIFEST_VERSION:
        raise DataError(
            f"{path}: manifest version {header.get('manifest_version')!r}, "
            f"expected {MANIFEST_VERSION}"
        )
    if "dim" not in header or "run_id" not in header:
        raise DataError(f"{path}: header must carry dim and run_id")
    records = []
    seen: set[str] = set()
    for line in lines[1:]:
        record = ManifestRecord.from_json(json.loads(line))
        if record.id in seen:
            raise DataError(f"{path}: duplicate record id {record.id!r}")
        seen.add(record.id)
        records.append(record)
    return header, records
