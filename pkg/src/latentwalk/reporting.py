"""Report emission: CSV curves, JSON summary, stage-count table, figures.

Everything written here is byte-deterministic for fixed inputs: floats are
formatted with shortest round-trip ``repr``, JSON keys are sorted, line
endings are LF, and figure files carry no volatile metadata.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError
from .evaluation import DensityCurve, EDCCurve

SUMMARY_NAME = "summary.json"


@dataclass
class KLMatrix:
    rows: list[str]
    cols: list[str]
    values: list[list[float]]

    def to_json(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "values": self.values}


@dataclass
class EvalArtifacts:
    """Everything the evaluation stage produced, ready for serialization."""

    density_curves: dict[str, DensityCurve] = field(default_factory=dict)
    edc_curves: dict[str, EDCCurve] = field(default_factory=dict)
    thresholds: dict[str, float] = field(default_factory=dict)
    fnmr: float | None = None
    fmr: float | None = None
    kl_scores: KLMatrix | None = None
    kl_quality: KLMatrix | None = None
    counts: dict = field(default_factory=dict)
    manifest_hash: str = ""

    def empty(self) -> bool:
        return not (
            self.density_curves
            or self.edc_curves
            or self.thresholds
            or self.kl_scores
            or self.kl_quality
        )


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _safe_name(name: str) -> str:
    return "".join(ch if (ch.isalnum() or ch in "-_") else "_" for ch in name)


def emit_report(artifacts: EvalArtifacts, out_dir) -> list[Path]:
    """Write the evaluation bundle; returns the written paths."""
    if artifacts.empty():
        raise DataError("nothing to report: no curves, thresholds, or matrices")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for name in sorted(artifacts.density_curves):
        curve = artifacts.density_curves[name]
        path = out_dir / f"density_{_safe_name(name)}.csv"
        _write_csv(
            path,
            ["grid", "density"],
            zip((float(g) for g in curve.grid), (float(d) for d in curve.density)),
        )
        written.append(path)

    for name in sorted(artifacts.edc_curves):
        curve = artifacts.edc_curves[name]
        path = out_dir / f"edc_{_safe_name(name)}.csv"
        _write_csv(path, ["fraction", "fnmr"], zip(curve.discard_fractions, curve.fnmr))
        written.append(path)

    for label, matrix in (("scores", artifacts.kl_scores), ("quality", artifacts.kl_quality)):
        if matrix is None:
            continue
        path = out_dir / f"kl_{label}.csv"
        rows = [[name] + [float(v) for v in row] for name, row in zip(matrix.rows, matrix.values)]
        _write_csv(path, ["dataset"] + list(matrix.cols), rows)
        written.append(path)

    summary = {
        "thresholds": dict(sorted(artifacts.thresholds.items())),
        "fnmr": artifacts.fnmr,
        "fmr": artifacts.fmr,
        "kl": artifacts.kl_scores.to_json() if artifacts.kl_scores else None,
        "kl_quality": artifacts.kl_quality.to_json() if artifacts.kl_quality else None,
        "counts": artifacts.counts,
        "manifest_hash": artifacts.manifest_hash,
        "edc": {
            name: {"threshold_used": c.threshold_used}
            for name, c in sorted(artifacts.edc_curves.items())
        },
    }
    summary_path = out_dir / SUMMARY_NAME
    summary_path.write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    written.append(summary_path)
    return written


@dataclass
class StageCounts:
    """Dataset sizes along the pipeline, Table-style."""

    base_total: int
    base_accepted: int
    mated_total: int
    mated_accepted: int
    first_step_failures: int | None = None
    attempted_directions: int | None = None

    @property
    def after_mated_total(self) -> int:
        return self.base_accepted + self.mated_total

    @property
    def final_accepted(self) -> int:
        return self.base_accepted + self.mated_accepted

    def to_json(self) -> dict:
        return {
            "base_total": self.base_total,
            "base_accepted": self.base_accepted,
            "mated_total": self.mated_total,
            "mated_accepted": self.mated_accepted,
            "after_mated_total": self.after_mated_total,
            "final_accepted": self.final_accepted,
            "first_step_failures": self.first_step_failures,
            "attempted_directions": self.attempted_directions,
        }

    def format_table(self) -> str:
        rows = [
            ("# base images", self.base_total),
            ("- filtering", self.base_accepted),
            ("+ mated samples", self.after_mated_total),
            ("- filtering", self.final_accepted),
        ]
        width = max(len(label) for label, _ in rows)
        lines = [f"{label:<{width}}  {count:>10}" for label, count in rows]
        return "\n".join(lines)


def stage_counts_from_manifest(records, walk_stats: dict | None = None) -> StageCounts:
    base = [r for r in records if r.kind == "base"]
    mated = [r for r in records if r.kind == "mated"]
    counts = StageCounts(
        base_total=len(base),
        base_accepted=sum(1 for r in base if r.accepted()),
        mated_total=len(mated),
        mated_accepted=sum(1 for r in mated if r.accepted()),
    )
    if walk_stats:
        counts.first_step_failures = walk_stats.get("first_step_failures")
        counts.attempted_directions = walk_stats.get("attempted_directions")
    return counts


def write_stage_counts(counts: StageCounts, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "stage_counts.json"
    json_path.write_text(
        json.dumps(counts.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    csv_path = out_dir / "stage_counts.csv"
    _write_csv(
        csv_path,
        ["stage", "count"],
        [
            ("base_total", counts.base_total),
            ("base_accepted", counts.base_accepted),
            ("after_mated_total", counts.after_mated_total),
            ("final_accepted", counts.final_accepted),
        ],
    )
    return [json_path, csv_path]


def render_figures(artifacts: EvalArtifacts, fig_dir) -> list[Path]:
    """Render score, quality, and EDC figures as PNG files.

    Figure bytes are deterministic: fixed size/dpi and no software/date
    metadata chunks.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    save_opts = {"dpi": 120, "metadata": {"Software": None}}

    score_names = [n for n in ("mated", "nonmated") if n in artifacts.density_curves]
    if score_names:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        styles = {"mated": "-", "nonmated": ":"}
        for name in score_names:
            curve = artifacts.density_curves[name]
            ax.plot(curve.grid, curve.density, styles.get(name, "-"), lw=2, label=name)
        for label, t in sorted(artifacts.thresholds.items()):
            ax.axvline(t, color="k", ls="--", lw=1, label=f"threshold {label}")
        ax.set_xlabel("comparison score")
        ax.set_ylabel("density")
        ax.legend()
        fig.tight_layout()
        path = fig_dir / "comparison_scores.png"
        fig.savefig(path, **save_opts)
        plt.close(fig)
        written.append(path)

    quality_names = sorted(n for n in artifacts.density_curves if n.startswith("quality_"))
    if quality_names:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for name in quality_names:
            curve = artifacts.density_curves[name]
            ax.plot(curve.grid, curve.density, lw=2, label=name[len("quality_") :])
        ax.set_xlabel("quality score")
        ax.set_ylabel("density")
        ax.legend()
        fig.tight_layout()
        path = fig_dir / "quality_scores.png"
        fig.savefig(path, **save_opts)
        plt.close(fig)
        written.append(path)

    if artifacts.edc_curves:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for name in sorted(artifacts.edc_curves):
            curve = artifacts.edc_curves[name]
            ax.plot(curve.discard_fractions, curve.fnmr, marker="o", ms=3, label=name)
        ax.set_xlabel("discard fraction")
        ax.set_ylabel("FNMR")
        ax.legend()
        fig.tight_layout()
        path = fig_dir / "edc.png"
        fig.savefig(path, **save_opts)
        plt.close(fig)
        written.append(path)

    return written
