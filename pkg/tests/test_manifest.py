import json

import pytest

from latentwalk.backend import SampleMetadata
from latentwalk.errors import DataError
from latentwalk.gates import GateVerdict
from latentwalk.manifest import ManifestRecord, read_manifest, write_manifest


def meta():
    return SampleMetadata(ied_px=100.0, yaw_deg=1.0, pitch_deg=-2.0, age_years=30.0, illum=0.5)


def records():
    return [
        ManifestRecord(
            id="b000001",
            subject_id="b000001",
            kind="base",
            metadata=meta(),
            quality={"toy": 88.5},
            latent_row=1,
        ),
        ManifestRecord(
            id="b000001-pc1+-s003",
            subject_id="b000001",
            kind="mated",
            metadata=meta(),
            direction=(1, 1),
            distance=0.6000000000000001,
            similarity_to_base=0.8123456789,
            verdict=GateVerdict(passed=True),
        ),
    ]


class TestRoundTrip:
    def test_basic(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_manifest(path, {"dim": 16, "run_id": "r1"}, records())
        header, loaded = read_manifest(path)
        assert header["manifest_version"] == 1
        assert header["dim"] == 16 and header["run_id"] == "r1"
        assert [r.to_json() for r in loaded] == [r.to_json() for r in records()]
        # floats survive exactly
        assert loaded[1].distance == 0.6000000000000001
        assert loaded[1].similarity_to_base == 0.8123456789

    def test_unknown_keys_preserved(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_manifest(path, {"dim": 4, "run_id": "r"}, records())
        lines = path.read_text().splitlines()
        doc = json.loads(lines[1])
        doc["annotator_note"] = {"source": "external-tool"}
        lines[1] = json.dumps(doc)
        path.write_text("\n".join(lines) + "\n")
        header, loaded = read_manifest(path)
        assert loaded[0].extra == {"annotator_note": {"source": "external-tool"}}
        write_manifest(path, header, loaded)
        _, reloaded = read_manifest(path)
        assert reloaded[0].extra == {"annotator_note": {"source": "external-tool"}}

    def test_rewrite_is_stable(self, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_manifest(p1, {"dim": 4, "run_id": "r"}, records())
        header, loaded = read_manifest(p1)
        write_manifest(p2, header, loaded)
        assert p1.read_bytes() == p2.read_bytes()


class TestValidation:
    def test_duplicate_ids(self, tmp_path):
        path = tmp_path / "m.jsonl"
        rec = records()[0]
        write_manifest(path, {"dim": 4, "run_id": "r"}, [rec])
        line = path.read_text().splitlines()[1]
        path.write_text(path.read_text() + line + "\n")
        with pytest.raises(DataError, match="duplicate"):
            read_manifest(path)

    def test_base_with_lineage_rejected(self):
        with pytest.raises(DataError):
            ManifestRecord(
                id="x", subject_id="x", kind="base", metadata=meta(), distance=1.0
            )

    def test_mated_missing_lineage_rejected(self):
        with pytest.raises(DataError):
            ManifestRecord(id="x", subject_id="b", kind="mated", metadata=meta())

    def test_quality_range(self):
        with pytest.raises(DataError):
            ManifestRecord(
                id="x", subject_id="x", kind="base", metadata=meta(), quality={"q": 150.0}
            )

    def test_similarity_range(self):
        with pytest.raises(DataError):
            ManifestRecord(
                id="x",
                subject_id="b",
                kind="mated",
                metadata=meta(),
                direction=(1, 1),
                distance=0.2,
                similarity_to_base=1.5,
            )

    def test_bad_kind(self):
        with pytest.raises(DataError):
            ManifestRecord(id="x", subject_id="x", kind="weird", metadata=meta())

    def test_header_version_check(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_manifest(path, {"dim": 4, "run_id": "r"}, [])
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["manifest_version"] = 99
        path.write_text(json.dumps(header) + "\n")
        with pytest.raises(DataError, match="version"):
            read_manifest(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text("")
        with pytest.raises(DataError):
            read_manifest(path)
