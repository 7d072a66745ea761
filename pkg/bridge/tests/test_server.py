import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from modelbridge.toymodel import EchoToyModel


class BridgeProcess:
    """Raw protocol driver for a spawned bridge."""

    def __init__(self, *args):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "modelbridge.cli", "serve", *args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )

    def send(self, obj):
        data = json.dumps(obj).encode()
        self.proc.stdin.write(struct.pack("<I", len(data)) + data)
        self.proc.stdin.flush()

    def recv(self):
        header = self.proc.stdout.read(4)
        assert len(header) == 4, "bridge closed the pipe"
        (n,) = struct.unpack("<I", header)
        return json.loads(self.proc.stdout.read(n))

    def hello(self, dim=6, embed_dim=4, version=1):
        self.send({"op": "hello", "version": version, "dim": dim, "embed_dim": embed_dim})
        return self.recv()

    def close(self):
        if self.proc.poll() is None:
            self.proc.kill()
        self.proc.wait()


@pytest.fixture
def bridge():
    b = BridgeProcess("--echo-toy", "5")
    yield b
    b.close()


def test_handshake_ok(bridge):
    assert bridge.hello() == {"ok": True, "version": 1}


def test_version_mismatch_rejected(bridge):
    reply = bridge.hello(version=2)
    assert reply["ok"] is False
    bridge.proc.wait(timeout=5)
    assert bridge.proc.returncode == 1


def test_unknown_op_unsupported(bridge):
    bridge.hello()
    bridge.send({"op": "frobnicate"})
    assert bridge.recv() == {"ok": False, "error": "unsupported"}


def test_shutdown_clean_exit(bridge):
    bridge.hello()
    bridge.send({"op": "shutdown"})
    assert bridge.recv() == {"ok": True}
    bridge.proc.wait(timeout=5)
    assert bridge.proc.returncode == 0


def test_generate_embed_match_local_model(bridge):
    dim, embed_dim, seed = 6, 4, 5
    bridge.hello(dim, embed_dim)
    model = EchoToyModel(seed, dim, embed_dim)
    gen = np.random.Generator(np.random.Philox(key=9))
    for i in range(20):
        w = gen.standard_normal(dim)
        bridge.send({"op": "generate", "id": f"s{i}", "latent": [float(x) for x in w]})
        reply = bridge.recv()
        assert reply["ok"]
        local = model.metadata(w)
        for key, value in local.items():
            assert reply["metadata"][key] == value
        bridge.send({"op": "embed", "id": f"s{i}"})
        emb = bridge.recv()
        assert emb["ok"]
        assert np.array_equal(np.asarray(emb["embedding"]), model.embedding(w))


def test_embed_unknown_id(bridge):
    bridge.hello()
    bridge.send({"op": "embed", "id": "ghost"})
    reply = bridge.recv()
    assert reply["ok"] is False and "unknown" in reply["error"]


def test_generate_wrong_length(bridge):
    bridge.hello(dim=6)
    bridge.send({"op": "generate", "id": "a", "latent": [0.0, 1.0]})
    assert bridge.recv()["ok"] is False


def test_center_is_null(bridge):
    bridge.hello()
    bridge.send({"op": "center"})
    assert bridge.recv() == {"ok": True, "latent": None}


def test_config_dim_mismatch(tmp_path):
    config = tmp_path / "bridge.json"
    config.write_text(json.dumps({"dim": 8, "embed_dim": 4}))
    b = BridgeProcess("--config", str(config), "--echo-toy", "5")
    try:
        reply = b.hello(dim=6, embed_dim=4)
        assert reply["ok"] is False and "dim" in reply["error"]
        b.proc.wait(timeout=5)
        assert b.proc.returncode == 1
    finally:
        b.close()


def test_model_load_failure_answers_handshake(tmp_path):
    config = tmp_path / "bridge.json"
    config.write_text(
        json.dumps(
            {
                "generator": {"module": "no_such_module_xyz", "factory": "load"},
                "embedder": {"module": "no_such_module_xyz", "factory": "load"},
            }
        )
    )
    b = BridgeProcess("--config", str(config))
    try:
        reply = b.hello()
        assert reply["ok"] is False and "could not load" in reply["error"]
        b.proc.wait(timeout=5)
        assert b.proc.returncode == 1
    finally:
        b.close()


def test_requires_config_or_echo():
    proc = subprocess.run(
        [sys.executable, "-m", "modelbridge.cli", "serve"],
        capture_output=True,
        timeout=10,
    )
    assert proc.returncode == 2
