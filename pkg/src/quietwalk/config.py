"""Experiment configuration: one YAML file per experiment, dotted-path
overrides from the command line, and a content hash for run manifests.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .env import EnvParams
from .noise_cost import CostParams
from .trainer import AgentConfig, TrainerConfig

DEFAULT_EVAL_EPS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0)
DEFAULT_V_TARGETS = (0.5, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25)


class ConfigError(ValueError):
    """Configuration file could not be parsed or violates an invariant."""


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvParams = field(default_factory=EnvParams)
    cost: CostParams = field(default_factory=CostParams)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    eval_eps: tuple = DEFAULT_EVAL_EPS
    eval_v_targets: tuple = DEFAULT_V_TARGETS
    seeds: int = 3

    def __post_init__(self):
        if any(not (0.0 <= e <= 1.0) for e in self.eval_eps):
            raise ConfigError("eval_eps values must lie in [0, 1]")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")


_SECTIONS = {
    "env": EnvParams,
    "cost": CostParams,
    "trainer": TrainerConfig,
    "agent": AgentConfig,
}
_TUPLE_FIELDS = ("eval_eps", "eval_v_targets")


def to_dict(cfg: ExperimentConfig) -> dict:
    out = dataclasses.asdict(cfg)
    # YAML-friendly: tuples become lists
    return json.loads(json.dumps(out))


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"section '{key}' must be a mapping")
            names = {f.name for f in dataclasses.fields(cls)}
            unknown = set(value) - names
            if unknown:
                raise ConfigError(f"unknown fields in '{key}': {sorted(unknown)}")
            coerced = {
                k: tuple(v) if isinstance(v, list) else v for k, v in value.items()
            }
            try:
                kwargs[key] = cls(**coerced)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid '{key}' section: {exc}") from exc
        elif key in _TUPLE_FIELDS:
            kwargs[key] = tuple(value)
        elif key == "seeds":
            kwargs[key] = int(value)
        else:
            raise ConfigError(f"unknown top-level config key '{key}'")
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    """Read a config file; run manifests are accepted (their config is used)."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if raw is None:
        raw = {}
    if isinstance(raw, dict) and raw.get("kind") == "manifest":
        raw = raw.get("config", {})
    return from_dict(raw)


def save_config(cfg: ExperimentConfig, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# quietwalk experiment configuration\n")
        yaml.safe_dump(to_dict(cfg), fh, sort_keys=True)


def apply_overrides(cfg: ExperimentConfig, assignments) -> ExperimentConfig:
    """Apply ``dotted.path=value`` overrides; values parse as YAML scalars."""
    raw = to_dict(cfg)
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"override '{assignment}' is not of the form path=value")
        dotted, text = assignment.split("=", 1)
        value = yaml.safe_load(text)
        node = raw
        parts = dotted.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"override path '{dotted}' does not exist")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"override path '{dotted}' does not exist")
        node[parts[-1]] = value
    return from_dict(raw)


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
