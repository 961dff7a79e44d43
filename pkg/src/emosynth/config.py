"""Run configuration (YAML) and the objects it builds.

Schema, every key optional::

    backend: mock            # mock | http
    endpoint:                # http backend only
      base_url: http://localhost:8000
      model: default
      embedding_model: null  # defaults to model
      token_env: EMOSYNTH_API_TOKEN
      supports_repetition_penalty: false
    mock:
      fixtures: null         # directory of <sha256(prompt)>.txt replies; null = bundled
      dim: 256               # hashing-embedding dimension
    concurrency: 4
    retries: 3
    backoff: 0.5
    timeout: 120
    stages:                  # per-stage generation overrides
      soft_labels: {max_new_tokens: 100, repetition_penalty: 1.03}
    thresholds:
      expressiveness: 0.3
      inclusive: true
      edge: 0.6
      dedup: 0.95
      removal: 0.6
      cooccur: 0.05
    seeds: {sample: 0, split: 0, analytics: 0, humaneval: 0}
    run:
      max_actors: null
      context_fraction: 1.0
      workers: 4
      sample: null           # number of plots; null = whole corpus
      sample_strategy: random
    paths:
      runs: runs
      prompts: null
      taxonomy: null
      mapping: null
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import InvalidArgument
from .gateway import STAGES, Gateway, GenerationParams, HttpBackend, MockBackend
from .pipeline.prompts import PromptSet
from .pipeline.runner import RunOptions
from .taxonomy import Taxonomy, default_taxonomy, load_taxonomy

DEFAULTS: dict[str, Any] = {
    "backend": "mock",
    "endpoint": {
        "base_url": "http://localhost:8000",
        "model": "default",
        "embedding_model": None,
        "token_env": "EMOSYNTH_API_TOKEN",
        "supports_repetition_penalty": False,
    },
    "mock": {"fixtures": None, "dim": 256},
    "concurrency": 4,
    "retries": 3,
    "backoff": 0.5,
    "timeout": 120.0,
    "stages": {},
    "thresholds": {"expressiveness": 0.3, "inclusive": True, "edge": 0.6, "dedup": 0.95,
                   "removal": 0.6, "cooccur": 0.05},
    "seeds": {"sample": 0, "split": 0, "analytics": 0, "humaneval": 0},
    "run": {"max_actors": None, "context_fraction": 1.0, "workers": 4, "sample": None,
            "sample_strategy": "random"},
    "paths": {"runs": "runs", "prompts": None, "taxonomy": None, "mapping": None},
}

# keys that change what a run produces; the rest (parallelism, retries) do not
_HASHED = ("backend", "endpoint", "mock", "stages", "thresholds", "seeds", "run", "paths")


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in base:
            raise InvalidArgument(f"unknown config key {where + k!r}")
        if isinstance(base[k], dict) and k != "stages":
            if not isinstance(v, dict):
                raise InvalidArgument(f"config key {where + k!r} must be a mapping")
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    data: dict[str, Any]
    source: Path | None = None

    @classmethod
    def load(cls, path: Path | str | None = None, overrides: dict | None = None) -> "RunConfig":
        raw: dict = {}
        src = None
        if path is not None:
            src = Path(path)
            raw = yaml.safe_load(src.read_text(encoding="utf-8")) or {}
            if not isinstance(raw, dict):
                raise InvalidArgument(f"{path}: config must be a mapping")
        data = _merge(DEFAULTS, raw)
        if overrides:
            data = _merge(data, overrides)
        cfg = cls(data, src)
        cfg.validate()
        return cfg

    def __getitem__(self, key: str) -> Any:
        return self.data[key]

    def validate(self) -> None:
        d = self.data
        if d["backend"] not in ("mock", "http"):
            raise InvalidArgument("backend must be mock or http")
        if int(d["concurrency"]) < 1:
            raise InvalidArgument("concurrency must be >= 1")
        if int(d["retries"]) < 0:
            raise InvalidArgument("retries must be >= 0")
        t = d["thresholds"]
        for key in ("expressiveness", "removal", "cooccur"):
            if not 0.0 <= float(t[key]) <= 1.0:
                raise InvalidArgument(f"thresholds.{key} must lie in [0, 1]")
        if not 0.0 < float(t["edge"]) < 1.0:
            raise InvalidArgument("thresholds.edge must lie in (0, 1)")
        if not 0.0 < float(t["dedup"]) <= 1.0:
            raise InvalidArgument("thresholds.dedup must lie in (0, 1]")
        for stage in d["stages"]:
            if stage not in STAGES:
                raise InvalidArgument(f"stages.{stage}: unknown stage")
        self.generation_params()
        self.run_options()

    def digest(self) -> str:
        blob = json.dumps({k: self.data[k] for k in _HASHED}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]

    def run_dir(self, corpus: Path | str | None = None) -> Path:
        key = self.digest()
        if corpus is not None:
            key = hashlib.sha256(f"{key}:{Path(corpus).resolve()}".encode()).hexdigest()[:12]
        return Path(self.data["paths"]["runs"]) / key

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    # -- builders ---------------------------------------------------------

    def generation_params(self) -> dict[str, GenerationParams]:
        out = {}
        for stage, over in self.data["stages"].items():
            if not isinstance(over, dict):
                raise InvalidArgument(f"stages.{stage} must be a mapping")
            allowed = {"max_new_tokens", "repetition_penalty"}
            bad = set(over) - allowed
            if bad:
                raise InvalidArgument(f"stages.{stage}: unknown keys {sorted(bad)}")
            out[stage] = GenerationParams(stage, **over)
        return out

    def run_options(self, stages: tuple[str, ...] = STAGES) -> RunOptions:
        r, t = self.data["run"], self.data["thresholds"]
        return RunOptions(
            stages=stages,
            threshold=float(t["expressiveness"]),
            inclusive=bool(t["inclusive"]),
            context_fraction=float(r["context_fraction"]),
            max_actors=r["max_actors"],
            workers=int(r["workers"]),
        )

    def taxonomy(self) -> Taxonomy:
        p = self.data["paths"]
        if p["taxonomy"] is None and p["mapping"] is None:
            return default_taxonomy()
        return load_taxonomy(p["taxonomy"], p["mapping"])

    def prompts(self) -> PromptSet:
        return PromptSet(self.data["paths"]["prompts"])

    def backend(self):
        if self.data["backend"] == "mock":
            m = self.data["mock"]
            fixtures = m["fixtures"]
            if fixtures is None:
                from .pipeline.fixtures import bundled_dir

                fixtures = bundled_dir()
            return MockBackend(fixtures, dim=int(m["dim"]))
        e = self.data["endpoint"]
        return HttpBackend(
            e["base_url"], e["model"], e["embedding_model"], e["token_env"], bool(e["supports_repetition_penalty"])
        )

    def gateway(self) -> Gateway:
        d = self.data
        return Gateway(self.backend(), int(d["concurrency"]), int(d["retries"]), float(d["backoff"]),
                       float(d["timeout"]))
