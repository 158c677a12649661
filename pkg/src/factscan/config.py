"""Run configuration: file, flag and environment layering.

Precedence, lowest to highest: built-in defaults, then the JSON config
file, then command-line flag overrides. The API key is never read from
a file or flag; it comes from the environment only (FACTSCAN_API_KEY,
falling back to OPENAI_API_KEY).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .llm import GenerationParams

API_KEY_ENV = "FACTSCAN_API_KEY"
API_KEY_ENV_FALLBACK = "OPENAI_API_KEY"


@dataclass
class RunConfig:
    """Everything a run needs; every field has a working default.

    Detection and judging decode greedily (temperature 0.0); rewriting
    samples at temperature 0.5. Thresholds: 0.3 for fact-level flags,
    0.75 for sentence-level flags, 0.4 for graph-export coloring.
    """

    endpoint: str = "http://localhost:8000"
    detection_model: str = "meta-llama/Llama-3.1-70B-Instruct"
    correction_model: str = "gpt-4o"
    judge_model: str = "meta-llama/Llama-3.1-70B-Instruct"
    detection_temperature: float = 0.0
    correction_temperature: float = 0.5
    max_tokens: int = 1024
    n_samples: int | None = None
    scorer: str = "llm_text"
    aggregation: str = "max"
    fact_threshold: float = 0.3
    sentence_threshold: float = 0.75
    dot_threshold: float = 0.4
    missing_mode: str = "exclude"
    seed: int = 0
    max_calls: int | None = None
    max_in_flight: int = 8
    timeout: float = 120.0

    def detection_params(self) -> GenerationParams:
        return GenerationParams(
            model_id=self.detection_model,
            temperature=self.detection_temperature,
            max_tokens=self.max_tokens,
        )

    def correction_params(self) -> GenerationParams:
        return GenerationParams(
            model_id=self.correction_model,
            temperature=self.correction_temperature,
            max_tokens=self.max_tokens,
        )

    def judge_params(self) -> GenerationParams:
        return GenerationParams(
            model_id=self.judge_model,
            temperature=0.0,
            max_tokens=self.max_tokens,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus flag overrides.

    Unknown keys fail loudly; an override value of None means "not set".
    """
    values: dict = {}
    if path is not None:
        with Path(path).open("r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        unknown = set(data) - _FIELDS
        if unknown:
            raise ValueError(f"{path}: unknown config keys: {sorted(unknown)}")
        values.update(data)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ValueError(f"unknown config override: {key}")
        values[key] = value
    return RunConfig(**values)


def api_key_from_env() -> str | None:
    return os.environ.get(API_KEY_ENV) or os.environ.get(API_KEY_ENV_FALLBACK)
