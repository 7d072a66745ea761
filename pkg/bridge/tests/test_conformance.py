"""Bridge conformance against the client toolkit.

These tests need the ``latentwalk`` package installed (test-only dependency);
the bridge itself never imports it. The pipeline comparison drives the
toolkit's CLI as a subprocess, its real external interface.
"""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from modelbridge.toymodel import EchoToyModel

latentwalk_backend = pytest.importorskip(
    "latentwalk.backend", reason="conformance tests need the client toolkit installed"
)


def ok(num, name):
    print(f"\nACCEPTANCE {num:02d} PASS: {name}")


def test_echo_model_matches_client_toy_on_1000_latents():
    seed, dim, embed_dim = 99, 12, 8
    model = EchoToyModel(seed, dim, embed_dim)
    session = latentwalk_backend.ToySession(
        latentwalk_backend.ToyBackendConfig(seed=seed, dim=dim, embed_dim=embed_dim)
    )
    gen = np.random.Generator(np.random.Philox(key=1))
    for i in range(1000):
        w = gen.standard_normal(dim)
        ref = session.generate(w, f"s{i}")
        local = model.metadata(w)
        for key, value in ref.metadata.to_dict().items():
            assert abs(local[key] - value) <= 1e-9
        assert np.max(np.abs(model.embedding(w) - session.embed(ref).values)) <= 1e-9


def equal_within(a, b, tol=1e-9, path="$"):
    """Structural equality with a numeric tolerance on floats."""
    if isinstance(a, dict) and isinstance(b, dict):
        assert a.keys() == b.keys(), f"{path}: keys {sorted(a)} != {sorted(b)}"
        for key in a:
            equal_within(a[key], b[key], tol, f"{path}.{key}")
    elif isinstance(a, list) and isinstance(b, list):
        assert len(a) == len(b), f"{path}: length {len(a)} != {len(b)}"
        for i, (x, y) in enumerate(zip(a, b)):
            equal_within(x, y, tol, f"{path}[{i}]")
    elif isinstance(a, float) or isinstance(b, float):
        assert isinstance(a, (int, float)) and isinstance(b, (int, float)), path
        assert math.isfinite(float(a)) and math.isfinite(float(b)), path
        assert abs(float(a) - float(b)) <= tol, f"{path}: {a} != {b}"
    else:
        assert a == b, f"{path}: {a!r} != {b!r}"


def run_stage(stage, config, run_dir):
    proc = subprocess.run(
        [
            sys.executable,
            "-m",
            "latentwalk.cli",
            stage,
            "--config",
            str(config),
            "--run-dir",
            str(run_dir),
        ],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0, f"{stage} failed:\n{proc.stderr}"


def test_criterion_11_pipeline_conformance(tmp_path):
    seed = 31337
    common = {
        "run_id": "bridge-conformance",
        "seed": 2,
        "dim": 10,
        "count": 10,
        "psi": 0.75,
        "walk": {
            "step_size": 0.2,
            "threshold": 0.8,
            "max_steps": 60,
            "directions": [[1, 1], [2, 1]],
            "save_policy": "furthest",
        },
        # Wide-open gates: all 10 subjects reach the walk, so embeddings are
        # exercised over the wire for every latent.
        "gates": {
            "min_ied_px": 0.0,
            "max_abs_yaw_deg": 1e6,
            "max_abs_pitch_deg": 1e6,
            "illum_min": 0.0,
            "illum_max": 1.0,
            "age_min": 0.0,
            "age_max": 1e6,
        },
    }
    toy_config = dict(common, backend={"kind": "toy", "seed": seed, "embed_dim": 6})
    bridge_command = [
        sys.executable,
        "-m",
        "modelbridge.cli",
        "serve",
        "--echo-toy",
        str(seed),
    ]
    external_config = dict(
        common, backend={"kind": "external", "command": bridge_command, "embed_dim": 6}
    )

    paths = {}
    for name, doc in (("toy", toy_config), ("external", external_config)):
        config = tmp_path / f"{name}.json"
        config.write_text(json.dumps(doc))
        run_dir = tmp_path / name
        for stage in ("generate", "filter", "pca", "walk"):
            run_stage(stage, config, run_dir)
        paths[name] = run_dir / "manifest.jsonl"

    toy_lines = paths["toy"].read_text().splitlines()
    ext_lines = paths["external"].read_text().splitlines()
    assert len(toy_lines) == len(ext_lines)
    mated = 0
    for toy_line, ext_line in zip(toy_lines, ext_lines):
        toy_doc = json.loads(toy_line)
        ext_doc = json.loads(ext_line)
        equal_within(toy_doc, ext_doc, tol=1e-9)
        if toy_doc.get("kind") == "mated":
            mated += 1
    assert mated > 0, "walk produced no mated records; embed path not exercised"
    ok(
        11,
        f"bridge echo mode reproduces the in-process manifest "
        f"({len(toy_lines) - 1} records, {mated} mated) within 1e-9",
    )
