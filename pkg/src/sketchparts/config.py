"""Run configuration: a JSON file of section -> known keys.

Unknown keys anywhere are rejected so typos fail loudly. Sections mirror
the plan/spec dataclasses:

    {
      "format_version": 1,
      "taxonomy": "path/to/taxonomy.tax",
      "seed": 0,
      "corpus": {"per_category": 40, "image_size": 128, "categories": [...]},
      "parser": {"iterations": 14000, "lr_body": 0.01, ...},
      "router": {"iterations": 400, "lr": 0.0007, ...}
    }
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .errors import ConfigError
from .training import RouterPlan, TrainPlan

TOP_LEVEL_KEYS = {"format_version", "taxonomy", "seed", "corpus", "parser", "router"}
CORPUS_KEYS = {"per_category", "image_size", "categories"}


def _check_keys(given, allowed, where):
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {sorted(unknown)}")


def _plan_fields(cls):
    return {f.name for f in dataclasses.fields(cls)}


class RunConfig:
    def __init__(self, raw=None, base_dir="."):
        raw = raw or {}
        _check_keys(raw, TOP_LEVEL_KEYS, "config")
        _check_keys(raw.get("corpus", {}), CORPUS_KEYS, "corpus")
        _check_keys(raw.get("parser", {}), _plan_fields(TrainPlan), "parser")
        _check_keys(raw.get("router", {}), _plan_fields(RouterPlan), "router")
        self.base_dir = Path(base_dir)
        self.taxonomy_path = raw.get("taxonomy")
        if self.taxonomy_path is not None:
            self.taxonomy_path = str(self.base_dir / self.taxonomy_path)
            if not Path(self.taxonomy_path).exists():
                raise ConfigError(f"taxonomy file {self.taxonomy_path} does not exist")
        self.seed = raw.get("seed", 0)
        self.corpus = dict(raw.get("corpus", {}))
        self.parser = dict(raw.get("parser", {}))
        self.router = dict(raw.get("router", {}))

    def train_plan(self, **overrides):
        merged = {**self.parser, **{k: v for k, v in overrides.items() if v is not None}}
        if "freeze" in merged:
            merged["freeze"] = tuple(merged["freeze"])
        return TrainPlan(**merged)

    def router_plan(self, **overrides):
        merged = {**self.router, **{k: v for k, v in overrides.items() if v is not None}}
        return RouterPlan(**merged)


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return RunConfig(raw, base_dir=path.parent)
