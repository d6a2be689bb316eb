"""Pipeline configuration: one TOML file plus flag overrides.

Secrets never live in config files; the API token comes from the
environment variable named in [client]. Referenced input paths must exist
at load time so a bad config fails before any stage runs.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .client import EndpointConfig
from .expr import TolerancePolicy
from .extract import ExtractionPatterns, DEFAULT_PATTERNS, patterns_from_config


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    # inputs / outputs
    dataset: Optional[str] = None
    predictions: Optional[str] = None
    templates_file: Optional[str] = None
    patterns_file: Optional[str] = None
    prompt_library: Optional[str] = None
    mock_client: Optional[str] = None
    output_dir: str = "out"
    cache_dir: Optional[str] = None
    # client
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    model_id: str = "default"
    # sampling
    k: int = 4
    temperature: float = 0.7
    top_p: float = 1.0
    max_tokens: int = 2048
    strategy: str = "zero-shot-cot"
    prompt_id: str = ""
    # filter / dedup
    strict_calc: bool = False
    dedup: str = "keep-all"
    # preference pairs
    pair_cap: int = 8
    beta: float = 0.1
    # evolution
    evolve_modes: tuple[str, ...] = ("depth", "breadth")
    scope: str = "grade-school arithmetic, solvable, numeric answer"
    # eval
    eval_decoding: str = "greedy"
    eval_prompting: str = "zero-shot"
    shots_file: Optional[str] = None
    # tolerance
    abs_tol: float = 1e-6
    rel_tol: float = 1e-6
    # run
    seed: int = 0
    workers: int = 1

    def tolerance(self) -> TolerancePolicy:
        return TolerancePolicy(abs_tol=self.abs_tol, rel_tol=self.rel_tol)

    def patterns(self) -> ExtractionPatterns:
        if not self.patterns_file:
            return DEFAULT_PATTERNS
        with open(self.patterns_file, encoding="utf-8") as f:
            return patterns_from_config(json.load(f))

    def fingerprint(self) -> str:
        doc = {
            "model_id": self.model_id,
            "k": self.k, "temperature": self.temperature,
            "top_p": self.top_p, "max_tokens": self.max_tokens,
            "strategy": self.strategy, "prompt_id": self.prompt_id,
            "strict_calc": self.strict_calc, "dedup": self.dedup,
            "pair_cap": self.pair_cap, "beta": self.beta,
            "evolve_modes": list(self.evolve_modes), "scope": self.scope,
            "eval_decoding": self.eval_decoding,
            "eval_prompting": self.eval_prompting,
            "abs_tol": self.abs_tol, "rel_tol": self.rel_tol,
            "seed": self.seed,
            "patterns": _file_digest(self.patterns_file),
            "shots": _file_digest(self.shots_file),
        }
        blob = json.dumps(doc, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def validate(self) -> "PipelineConfig":
        for label in ("dataset", "predictions", "templates_file",
                      "patterns_file", "prompt_library", "mock_client",
                      "shots_file"):
            value = getattr(self, label)
            if value and not Path(value).exists():
                raise ConfigError(f"{label} path does not exist: {value}")
        if self.strategy not in ("zero-shot", "zero-shot-cot", "few-shot-cot"):
            raise ConfigError(f"unknown sampling strategy {self.strategy!r}")
        if self.dedup not in ("keep-all", "by-equation-list"):
            raise ConfigError(f"unknown dedup mode {self.dedup!r}")
        if self.k < 1 or self.workers < 1 or self.pair_cap < 1:
            raise ConfigError("k, workers and pair cap must be >= 1")
        if self.beta <= 0:
            raise ConfigError("beta must be > 0")
        return self


def _file_digest(path: Optional[str]) -> Optional[str]:
    if not path or not Path(path).exists():
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _endpoint_from_toml(doc: dict) -> EndpointConfig:
    client = doc.get("client", {})
    return EndpointConfig(
        endpoint_id=client.get("endpoint_id", "default"),
        base_url=client.get("base_url", ""),
        auth_env=client.get("auth_env", "MATHFORGE_API_TOKEN"),
        auth_header=client.get("auth_header", "Authorization"),
        auth_scheme=client.get("auth_scheme", "Bearer"),
        extra_headers=dict(client.get("extra_headers", {})),
        timeout=float(client.get("timeout", 120.0)),
        retries=int(client.get("retries", 3)),
    )


def load_config(path: Optional[str] = None, **overrides) -> PipelineConfig:
    doc: dict = {}
    if path:
        try:
            with open(path, "rb") as f:
                doc = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"bad config file {path}: {err}") from None
    paths = doc.get("paths", {})
    sampling = doc.get("sampling", {})
    filt = doc.get("filter", {})
    pairs = doc.get("pairs", {})
    evolve = doc.get("evolve", {})
    eval_cfg = doc.get("eval", {})
    tol = doc.get("tolerance", {})
    run = doc.get("run", {})
    config = PipelineConfig(
        dataset=paths.get("dataset"),
        predictions=paths.get("predictions"),
        templates_file=paths.get("templates"),
        patterns_file=paths.get("patterns"),
        prompt_library=paths.get("prompt_library"),
        mock_client=paths.get("mock_client"),
        output_dir=paths.get("output_dir", "out"),
        cache_dir=paths.get("cache_dir"),
        endpoint=_endpoint_from_toml(doc),
        model_id=doc.get("client", {}).get("model", "default"),
        k=int(sampling.get("k", 4)),
        temperature=float(sampling.get("temperature", 0.7)),
        top_p=float(sampling.get("top_p", 1.0)),
        max_tokens=int(sampling.get("max_tokens", 2048)),
        strategy=sampling.get("strategy", "zero-shot-cot"),
        prompt_id=sampling.get("prompt_id", ""),
        strict_calc=bool(filt.get("strict_calc", False)),
        dedup=filt.get("dedup", "keep-all"),
        pair_cap=int(pairs.get("cap", 8)),
        beta=float(pairs.get("beta", 0.1)),
        evolve_modes=tuple(evolve.get("modes", ["depth", "breadth"])),
        scope=evolve.get("scope",
                         "grade-school arithmetic, solvable, numeric answer"),
        eval_decoding=eval_cfg.get("decoding", "greedy"),
        eval_prompting=eval_cfg.get("prompting", "zero-shot"),
        shots_file=eval_cfg.get("shots_file") or paths.get("shots"),
        abs_tol=float(tol.get("abs_tol", 1e-6)),
        rel_tol=float(tol.get("rel_tol", 1e-6)),
        seed=int(run.get("seed", 0)),
        workers=int(run.get("workers", 1)),
    )
    clean = {k: v for k, v in overrides.items() if v is not None}
    if clean:
        config = replace(config, **clean)
    return config.validate()
