"""Run configuration: one TOML or JSON document driving every stage.

Stage outputs live under the run directory with fixed names; the optional
``[paths]`` table renames individual entries but names must be plain
relative filenames, so everything stays inside the run directory.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .backend import ExternalBackendConfig, ToyBackendConfig
from .errors import ConfigError
from .gates import GateConfig
from .walk import WalkConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_EDC_FRACTIONS = tuple(i / 20 for i in range(20))

DEFAULT_PATHS = {
    "latents_raw": "latents_raw.lvec",
    "latents": "latents.lvec",
    "basis_dir": "basis",
    "manifest": "manifest.jsonl",
    "walk_stats": "walk_stats.json",
    "filter_report": "filter_report.json",
    "eval_dir": "eval",
    "report_dir": "report",
}


@dataclass(frozen=True)
class EvalConfig:
    target_fmr: float = 0.001
    nonmated_pairs_per_subject: int = 10
    pairing_seed: int = 2024
    kde_grid_points: int = 512
    edc_fractions: tuple[float, ...] = DEFAULT_EDC_FRACTIONS
    attach_toy_quality: bool = True

    def __post_init__(self):
        if not (0.0 < self.target_fmr < 1.0):
            raise ValueError(f"target_fmr must lie in (0, 1), got {self.target_fmr}")
        if self.nonmated_pairs_per_subject < 1:
            raise ValueError("nonmated_pairs_per_subject must be >= 1")
        if self.kde_grid_points < 2:
            raise ValueError("kde_grid_points must be >= 2")
        object.__setattr__(self, "edc_fractions", tuple(float(d) for d in self.edc_fractions))


@dataclass(frozen=True)
class RunConfig:
    run_id: str
    seed: int
    dim: int = 32
    count: int = 2000
    psi: float = 0.75
    workers: int = 1
    pca_components: int | None = None
    backend: ToyBackendConfig | ExternalBackendConfig = None  # filled by loader
    walk: WalkConfig = field(default_factory=WalkConfig)
    gates: GateConfig = field(default_factory=GateConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: dict = field(default_factory=lambda: dict(DEFAULT_PATHS))

    def __post_init__(self):
        if not self.run_id:
            raise ValueError("run_id must be non-empty")
        if self.dim < 1 or self.count < 1:
            raise ValueError("dim and count must be >= 1")
        if not (0.0 <= self.psi <= 1.0):
            raise ValueError(f"psi must lie in [0, 1], got {self.psi}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.backend is None:
            raise ValueError("backend configuration is required")
        if self.backend.dim != self.dim:
            raise ValueError(
                f"backend dim {self.backend.dim} does not match run dim {self.dim}"
            )
        if self.pca_components is not None and not (1 <= self.pca_components <= self.dim):
            raise ValueError("pca_components must lie in [1, dim]")

    def path(self, run_dir, key: str) -> Path:
        return Path(run_dir) / self.paths[key]

    def echo(self) -> dict:
        """Effective configuration as a JSON-ready document."""
        if isinstance(self.backend, ToyBackendConfig):
            backend = {
                "kind": "toy",
                "seed": self.backend.seed,
                "embed_dim": self.backend.embed_dim,
            }
        else:
            backend = {
                "kind": "external",
                "command": list(self.backend.command),
                "embed_dim": self.backend.embed_dim,
            }
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "dim": self.dim,
            "count": self.count,
            "psi": self.psi,
            "workers": self.workers,
            "pca_components": self.pca_components,
            "backend": backend,
            "walk": {
                "step_size": self.walk.step_size,
                "threshold": self.walk.threshold,
                "max_steps": self.walk.max_steps,
                "directions": [list(d) for d in self.walk.directions],
                "save_policy": self.walk.save_policy,
            },
            "gates": {f.name: getattr(self.gates, f.name) for f in fields(self.gates)},
            "eval": {
                "target_fmr": self.eval.target_fmr,
                "nonmated_pairs_per_subject": self.eval.nonmated_pairs_per_subject,
                "pairing_seed": self.eval.pairing_seed,
                "kde_grid_points": self.eval.kde_grid_points,
                "edc_fractions": list(self.eval.edc_fractions),
                "attach_toy_quality": self.eval.attach_toy_quality,
            },
            "paths": dict(self.paths),
        }


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def _build_backend(doc: dict, dim: int, seed: int, override: str | None):
    section = dict(doc.get("backend", {}))
    _check_keys(section, {"kind", "seed", "embed_dim", "command"}, "backend")
    kind = override or section.get("kind", "toy")
    embed_dim = int(section.get("embed_dim", 16))
    if kind == "toy":
        return ToyBackendConfig(seed=int(section.get("seed", seed)), dim=dim, embed_dim=embed_dim)
    if kind == "external":
        command = section.get("command")
        if not command:
            raise ConfigError("external backend requires backend.command")
        return ExternalBackendConfig(command=tuple(command), dim=dim, embed_dim=embed_dim)
    raise ConfigError(f"unknown backend kind {kind!r}")


def _build_paths(doc: dict) -> dict:
    paths = dict(DEFAULT_PATHS)
    section = dict(doc.get("paths", {}))
    _check_keys(section, set(DEFAULT_PATHS), "paths")
    for key, value in section.items():
        value = str(value)
        p = Path(value)
        if p.is_absolute() or ".." in p.parts or not value:
            raise ConfigError(
                f"paths.{key} must be a relative name inside the run directory, got {value!r}"
            )
        paths[key] = value
    return paths


def parse_run_config(doc: dict, backend_override: str | None = None) -> RunConfig:
    _check_keys(
        dict(doc),
        {
            "run_id",
            "seed",
            "dim",
            "count",
            "psi",
            "workers",
            "pca_components",
            "backend",
            "walk",
            "gates",
            "eval",
            "paths",
        },
        "top-level",
    )
    try:
        dim = int(doc.get("dim", 32))
        seed = int(doc.get("seed", 0))
        walk_section = dict(doc.get("walk", {}))
        _check_keys(
            walk_section,
            {"step_size", "threshold", "max_steps", "directions", "save_policy"},
            "walk",
        )
        if "directions" in walk_section:
            walk_section["directions"] = tuple(
                (int(c), int(s)) for c, s in walk_section["directions"]
            )
        gates_section = dict(doc.get("gates", {}))
        _check_keys(gates_section, {f.name for f in fields(GateConfig)}, "gates")
        eval_section = dict(doc.get("eval", {}))
        _check_keys(eval_section, {f.name for f in fields(EvalConfig)}, "eval")
        return RunConfig(
            run_id=str(doc.get("run_id", "")),
            seed=seed,
            dim=dim,
            count=int(doc.get("count", 2000)),
            psi=float(doc.get("psi", 0.75)),
            workers=int(doc.get("workers", 1)),
            pca_components=(
                int(doc["pca_components"]) if doc.get("pca_components") is not None else None
            ),
            backend=_build_backend(doc, dim, seed, backend_override),
            walk=WalkConfig(**walk_section),
            gates=GateConfig(**gates_section),
            eval=EvalConfig(**eval_section),
            paths=_build_paths(doc),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid run configuration: {exc}") from exc


def load_run_config(path, backend_override: str | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_bytes()
    if path.suffix == ".toml":
        try:
            doc = tomllib.loads(text.decode("utf-8"))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    elif path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    else:
        raise ConfigError(f"{path}: config must be a .toml or .json file")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config root must be a table/object")
    return parse_run_config(doc, backend_override)
