"""Bridge configuration and model loading.

The config is a JSON document::

    {
      "dim": 512,
      "embed_dim": 512,
      "device": "cpu",
      "generator": {"module": "my_models.gan", "factory": "load_generator", "args": {}},
      "embedder":  {"module": "my_models.arcface", "factory": "load_embedder", "args": {}},
      "estimators": {
        "pose":    {"module": "...", "factory": "...", "args": {}},
        "age":     {"module": "...", "factory": "...", "args": {}},
        "quality": {"module": "...", "factory": "...", "args": {}}
      }
    }

A factory is any importable callable ``factory(device=..., **args)`` whose
return value exposes the duck-typed surface the server calls (see
:mod:`modelbridge.server`). Estimators are optional; missing ones leave the
matching metadata fields null.
"""

from __future__ import annotations

import importlib
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(Exception):
    pass


class ModelLoadError(Exception):
    pass


@dataclass
class BridgeConfig:
    dim: int | None = None
    embed_dim: int | None = None
    device: str = "cpu"
    generator: dict | None = None
    embedder: dict | None = None
    estimators: dict = field(default_factory=dict)


def load_config(path) -> BridgeConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config root must be an object")
    known = {"dim", "embed_dim", "device", "generator", "embedder", "estimators"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return BridgeConfig(
        dim=doc.get("dim"),
        embed_dim=doc.get("embed_dim"),
        device=doc.get("device", "cpu"),
        generator=doc.get("generator"),
        embedder=doc.get("embedder"),
        estimators=doc.get("estimators") or {},
    )


def load_factory(locator: dict, device: str):
    """Import and call a model factory described by its locator."""
    try:
        module = importlib.import_module(locator["module"])
        factory = getattr(module, locator["factory"])
        return factory(device=device, **(locator.get("args") or {}))
    except Exception as exc:
        raise ModelLoadError(
            f"could not load {locator.get('module')}:{locator.get('factory')}: {exc}"
        ) from exc
