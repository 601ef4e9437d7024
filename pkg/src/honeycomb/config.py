"""Layered runtime configuration.

Values resolve with flags over environment variables over the YAML config
file over built-in defaults. Keys are dotted (section.option); environment
overrides spell them HONEYCOMB_SECTION_OPTION. Unknown keys in a config
file fail fast so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import logging
import os
import shlex
from dataclasses import dataclass
from pathlib import Path

import yaml

from .agent import AgentConfig
from .errors import ConfigError
from .retriever import RetrieverConfig

log = logging.getLogger(__name__)

ENV_PREFIX = "HONEYCOMB_"

# Dotted key -> default; the default's type drives env-string coercion.
DEFAULTS: dict[str, object] = {
    "provider": "remote",
    "seed": 0,
    "ablation": "kb,tools",
    "kb.store": "",
    "retriever.n_first_stage": 50,
    "retriever.k_final": 3,
    "retriever.k1": 1.2,
    "retriever.b": 0.75,
    "embedding.dim": 256,
    "embedding.endpoint": "",
    "agent.max_iterations": 8,
    "agent.max_depth": 2,
    "agent.max_subquestions": 4,
    "agent.max_tools": 4,
    "agent.observation_limit": 2000,
    "llm.temperature": 0.0,
    "llm.max_output_tokens": 1024,
    "llm.cassette_dir": "",
    "tools.mode": "replay",
    "tools.cassette_dir": "",
    "tools.timeout": 30.0,
    "compute.worker_cmd": "",
    "eval.out_dir": "",
}


def _flatten(doc: dict, prefix: str = "") -> dict[str, object]:
    flat: dict[str, object] = {}
    for key, value in doc.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def _coerce(key: str, value: object) -> object:
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            return str(value).strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from exc


def _env_name(key: str) -> str:
    return ENV_PREFIX + key.upper().replace(".", "_")


def load_config_file(path: str | Path) -> dict[str, object]:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    flat = _flatten(doc)
    unknown = sorted(set(flat) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {', '.join(unknown)}")
    return {key: _coerce(key, value) for key, value in flat.items()}


@dataclass(frozen=True)
class Settings:
    values: dict[str, object]

    def __getitem__(self, key: str) -> object:
        if key not in self.values:
            raise ConfigError(f"unknown setting {key!r}")
        return self.values[key]

    def retriever_config(self) -> RetrieverConfig:
        return RetrieverConfig(
            n_first_stage=self["retriever.n_first_stage"],
            k_final=self["retriever.k_final"],
            k1=self["retriever.k1"], b=self["retriever.b"])

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            max_iterations=self["agent.max_iterations"],
            max_depth=self["agent.max_depth"],
            max_subquestions=self["agent.max_subquestions"],
            max_tools=self["agent.max_tools"],
            observation_limit=self["agent.observation_limit"])

    def worker_cmd(self) -> list[str]:
        raw = str(self["compute.worker_cmd"])
        return shlex.split(raw) if raw.strip() else []


def resolve_settings(config_path: str | Path | None = None,
                     flag_overrides: dict[str, object] | None = None,
                     env: dict[str, str] | None = None) -> Settings:
    """Merge defaults, config file, environment, and flags, in that order."""
    env = os.environ if env is None else env
    values = dict(DEFAULTS)
    if config_path is not None:
        values.update(load_config_file(config_path))
    for key in DEFAULTS:
        raw = env.get(_env_name(key))
        if raw is not None:
            values[key] = _coerce(key, raw)
    for key, value in (flag_overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown setting {key!r}")
        if value is not None:
            values[key] = _coerce(key, value)
    return Settings(values=values)
