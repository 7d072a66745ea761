import numpy as np
import pytest

from latentwalk.errors import DataError
from latentwalk.evaluation import EDCCurve, kde
from latentwalk.reporting import (
    EvalArtifacts,
    KLMatrix,
    StageCounts,
    emit_report,
    render_figures,
    stage_counts_from_manifest,
    write_stage_counts,
)


def sample_artifacts():
    gen = np.random.Generator(np.random.Philox(key=60))
    artifacts = EvalArtifacts()
    artifacts.density_curves["mated"] = kde(gen.uniform(0.8, 1.0, 100))
    artifacts.density_curves["nonmated"] = kde(gen.uniform(-0.3, 0.5, 100))
    artifacts.density_curves["quality_toy_base"] = kde(gen.uniform(40, 90, 100))
    artifacts.edc_curves["toy"] = EDCCurve(
        discard_fractions=(0.0, 0.1, 0.2), fnmr=(0.2, 0.1, 0.0), threshold_used=0.75
    )
    artifacts.thresholds["fmr_0.001"] = 0.75
    artifacts.fnmr = 0.2
    artifacts.fmr = 0.001
    artifacts.kl_scores = KLMatrix(
        rows=["mated", "nonmated"], cols=["mated", "nonmated"], values=[[0.0, 3.5], [4.2, 0.0]]
    )
    artifacts.counts = {"mated_scores": 100}
    artifacts.manifest_hash = "abc123"
    return artifacts


class TestEmitReport:
    def test_writes_expected_files(self, tmp_path):
        written = emit_report(sample_artifacts(), tmp_path)
        names = {p.name for p in written}
        assert names == {
            "density_mated.csv",
            "density_nonmated.csv",
            "density_quality_toy_base.csv",
            "edc_toy.csv",
            "kl_scores.csv",
            "summary.json",
        }

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        emit_report(sample_artifacts(), a)
        emit_report(sample_artifacts(), b)
        for path in sorted(a.iterdir()):
            assert path.read_bytes() == (b / path.name).read_bytes()

    def test_csv_round_trip_precision(self, tmp_path):
        emit_report(sample_artifacts(), tmp_path)
        import csv

        with open(tmp_path / "density_mated.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        curve = sample_artifacts().density_curves["mated"]
        assert float(rows[0]["grid"]) == curve.grid[0]
        assert float(rows[0]["density"]) == curve.density[0]

    def test_csv_line_endings(self, tmp_path):
        emit_report(sample_artifacts(), tmp_path)
        raw = (tmp_path / "edc_toy.csv").read_bytes()
        assert b"\r" not in raw
        assert raw.startswith(b"fraction,fnmr\n")

    def test_kl_matrix_labels(self, tmp_path):
        emit_report(sample_artifacts(), tmp_path)
        text = (tmp_path / "kl_scores.csv").read_text()
        lines = text.splitlines()
        assert lines[0] == "dataset,mated,nonmated"
        assert lines[1].startswith("mated,")
        assert lines[2].startswith("nonmated,")

    def test_summary_schema(self, tmp_path):
        import json

        emit_report(sample_artifacts(), tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert set(summary) >= {"thresholds", "fnmr", "fmr", "kl"}
        assert summary["kl"]["rows"] == ["mated", "nonmated"]
        assert summary["kl"]["values"][0][1] == 3.5

    def test_empty_artifacts_rejected(self, tmp_path):
        with pytest.raises(DataError):
            emit_report(EvalArtifacts(), tmp_path)


class TestStageCounts:
    def test_arithmetic(self):
        counts = StageCounts(
            base_total=500, base_accepted=120, mated_total=230, mated_accepted=200
        )
        assert counts.after_mated_total == 350
        assert counts.final_accepted == 320
        table = counts.format_table()
        assert "500" in table and "350" in table

    def test_write(self, tmp_path):
        counts = StageCounts(base_total=10, base_accepted=5, mated_total=8, mated_accepted=6)
        paths = write_stage_counts(counts, tmp_path)
        assert {p.name for p in paths} == {"stage_counts.json", "stage_counts.csv"}

    def test_from_manifest(self):
        from latentwalk.backend import SampleMetadata
        from latentwalk.gates import GateVerdict
        from latentwalk.manifest import ManifestRecord

        meta = SampleMetadata(ied_px=100, yaw_deg=0, pitch_deg=0, age_years=30, illum=0.5)
        ok = GateVerdict(passed=True)
        bad = GateVerdict(passed=False, reasons=frozenset({"yaw"}))
        records = [
            ManifestRecord(id="b1", subject_id="b1", kind="base", metadata=meta, verdict=ok),
            ManifestRecord(id="b2", subject_id="b2", kind="base", metadata=meta, verdict=bad),
            ManifestRecord(
                id="m1",
                subject_id="b1",
                kind="mated",
                metadata=meta,
                direction=(1, 1),
                distance=0.2,
                similarity_to_base=0.9,
                verdict=ok,
            ),
        ]
        counts = stage_counts_from_manifest(records, {"first_step_failures": 1})
        assert counts.base_total == 2 and counts.base_accepted == 1
        assert counts.mated_total == 1 and counts.mated_accepted == 1
        assert counts.first_step_failures == 1


class TestFigures:
    def test_renders_pngs(self, tmp_path):
        written = render_figures(sample_artifacts(), tmp_path)
        names = {p.name for p in written}
        assert names == {"comparison_scores.png", "quality_scores.png", "edc.png"}
        for p in written:
            assert p.read_bytes().startswith(b"\x89PNG")

    def test_figure_bytes_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        render_figures(sample_artifacts(), a)
        render_figures(sample_artifacts(), b)
        for path in sorted(a.iterdir()):
            assert path.read_bytes() == (b / path.name).read_bytes()

    def test_no_figures_for_empty(self, tmp_path):
        assert render_figures(EvalArtifacts(), tmp_path) == []
