import io
import sys
from pathlib import Path

import numpy as np
import pytest

from latentwalk.backend import ExternalBackendConfig, ToyBackendConfig, ToySession, open_session
from latentwalk.errors import BackendError, HandshakeError, ProtocolError, SpawnError
from latentwalk.protocol import ExternalSession, read_frame, write_frame

STUB = Path(__file__).parent / "stub_server.py"


def stub_command(dim, embed_dim, seed=0, *extra):
    return (sys.executable, str(STUB), "--dim", str(dim), "--embed-dim", str(embed_dim), "--seed", str(seed), *extra)


class TestFraming:
    def test_round_trip(self):
        buf = io.BytesIO()
        write_frame(buf, {"op": "hello", "x": 1.5})
        buf.seek(0)
        assert read_frame(buf) == {"op": "hello", "x": 1.5}

    def test_float_precision_survives(self):
        value = 0.1 + 0.2  # not exactly representable in decimal
        buf = io.BytesIO()
        write_frame(buf, {"v": value})
        buf.seek(0)
        assert read_frame(buf)["v"] == value

    def test_length_prefix_matches_payload(self):
        buf = io.BytesIO()
        write_frame(buf, {"op": "x"})
        raw = buf.getvalue()
        assert int.from_bytes(raw[:4], "little") == len(raw) - 4

    def test_eof_mid_frame(self):
        buf = io.BytesIO()
        write_frame(buf, {"op": "hello"})
        truncated = io.BytesIO(buf.getvalue()[:-3])
        with pytest.raises(ProtocolError):
            read_frame(truncated)

    def test_garbage_payload(self):
        payload = b"not json"
        frame = len(payload).to_bytes(4, "little") + payload
        with pytest.raises(ProtocolError):
            read_frame(io.BytesIO(frame))


class TestExternalSession:
    def test_handshake_and_dims(self):
        cfg = ExternalBackendConfig(command=stub_command(8, 4, 3), dim=8, embed_dim=4)
        with ExternalSession(cfg) as session:
            assert session.dim == 8 and session.embed_dim == 4

    def test_byte_equivalence_with_toy(self):
        # Equivalent definitions on both ends of the wire give identical bits.
        toy = ToySession(ToyBackendConfig(seed=3, dim=8, embed_dim=4))
        cfg = ExternalBackendConfig(command=stub_command(8, 4, 3), dim=8, embed_dim=4)
        gen = np.random.Generator(np.random.Philox(key=11))
        with ExternalSession(cfg) as remote:
            for i in range(10):
                w = gen.standard_normal(8)
                local_ref = toy.generate(w, f"s{i}")
                remote_ref = remote.generate(w, f"s{i}")
                assert remote_ref.metadata == local_ref.metadata
                assert remote_ref.latent_hash == local_ref.latent_hash
                assert np.array_equal(
                    remote.embed(remote_ref).values, toy.embed(local_ref).values
                )

    def test_version_mismatch(self):
        cfg = ExternalBackendConfig(
            command=stub_command(8, 4, 0, "--version", "2"), dim=8, embed_dim=4
        )
        with pytest.raises(HandshakeError):
            ExternalSession(cfg)

    def test_dim_disagreement(self):
        cfg = ExternalBackendConfig(command=stub_command(6, 4), dim=8, embed_dim=4)
        with pytest.raises(HandshakeError):
            ExternalSession(cfg)

    def test_immediate_exit(self):
        cfg = ExternalBackendConfig(
            command=(sys.executable, "-c", "pass"), dim=8, embed_dim=4
        )
        with pytest.raises(HandshakeError):
            ExternalSession(cfg)

    def test_spawn_failure(self):
        cfg = ExternalBackendConfig(
            command=("/does/not/exist-xyz",), dim=8, embed_dim=4
        )
        with pytest.raises(SpawnError):
            ExternalSession(cfg)

    def test_error_reply(self):
        cfg = ExternalBackendConfig(command=stub_command(8, 4), dim=8, embed_dim=4)
        from latentwalk.backend import SampleMetadata, SampleRef

        ghost = SampleRef(
            id="nope",
            latent_hash=0,
            metadata=SampleMetadata(ied_px=None, yaw_deg=None, pitch_deg=None, age_years=None, illum=None),
        )
        with ExternalSession(cfg) as session:
            with pytest.raises(BackendError):
                session.embed(ghost)

    def test_center_optional(self):
        cfg = ExternalBackendConfig(
            command=stub_command(8, 4, 0, "--no-center"), dim=8, embed_dim=4
        )
        with ExternalSession(cfg) as session:
            assert session.center() is None

    def test_open_session_factory(self):
        cfg = ExternalBackendConfig(command=stub_command(8, 4), dim=8, embed_dim=4)
        with open_session(cfg) as session:
            assert session.backend_kind == "external"

    def test_clean_shutdown(self):
        cfg = ExternalBackendConfig(command=stub_command(8, 4), dim=8, embed_dim=4)
        session = ExternalSession(cfg)
        session.close()
        assert session._proc.returncode == 0
