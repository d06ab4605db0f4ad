"""Run configuration.

A YAML mapping with optional sections; every key is optional and unknown
keys are rejected::

    profile: default            # or "paper-application"
    model:                      # Hyperparameters
      K: 10
      a1: 2.1
      a2: 3.1
      nu: 3
      m_rho: 0.0
      s2_rho: 1.0
      mu_mode: fixed            # or "estimated"
      m_mu: 0.0
      s2_mu: 1.0
    chain:                      # ChainConfig
      iterations: 5000
      burn_in: 2500
      thinning: 5
      seed: 0
      store_omega: false
      jitter: 1.0e-10
      pg_exact_max: 30
      rho_update: exact         # or "conditional"
    postprocess:
      threshold: 0.9
      init_index: -1
      tol: 1.0e-8
      max_iter: 1000
    tree:
      pseudo_mass: 0.5
      exhaustive_limit: 20
    dpm:
      iterations: 2000
      burn_in: 1000
      thinning: 2
      eta: 1.0
      a: 2.0
      b: 1.0
      alpha_init: 1.0
    evaluate:
      replications: 1

The ``paper-application`` profile sets K = 10 and threshold 0.95; explicit
keys override the profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .dpm import DpmConfig
from .gibbs import ChainConfig
from .model import Hyperparameters
from .tree_builder import TreeBuilderOptions


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.key_path = path


@dataclass(frozen=True)
class PostprocessOptions:
    threshold: float = 0.9
    init_index: int = -1
    tol: float = 1e-8
    max_iter: int = 1000

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.max_iter < 1 or not self.tol > 0:
            raise ValueError("max_iter must be positive and tol > 0")


@dataclass(frozen=True)
class EvaluateOptions:
    replications: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")


@dataclass(frozen=True)
class Config:
    profile: str = "default"
    model: Hyperparameters = field(default_factory=Hyperparameters)
    chain: ChainConfig = field(default_factory=ChainConfig)
    postprocess: PostprocessOptions = field(default_factory=PostprocessOptions)
    tree: TreeBuilderOptions = field(default_factory=TreeBuilderOptions)
    dpm: DpmConfig = field(default_factory=DpmConfig)
    evaluate: EvaluateOptions = field(default_factory=EvaluateOptions)

    def to_dict(self) -> dict:
        out = {"profile": self.profile}
        for f in fields(self):
            if f.name != "profile":
                section = getattr(self, f.name)
                out[f.name] = {g.name: getattr(section, g.name) for g in fields(section)}
        return out


SECTIONS = {
    "model": Hyperparameters,
    "chain": ChainConfig,
    "postprocess": PostprocessOptions,
    "tree": TreeBuilderOptions,
    "dpm": DpmConfig,
    "evaluate": EvaluateOptions,
}

PROFILES = {
    "default": {},
    "paper-application": {"model": {"K": 10}, "postprocess": {"threshold": 0.95}},
}

_TYPES = {int: (int,), float: (int, float), bool: (bool,), str: (str,)}


def _check_type(path, value, annotation):
    kind = {"int": int, "float": float, "bool": bool, "str": str}.get(
        annotation if isinstance(annotation, str) else getattr(annotation, "__name__", "")
    )
    if kind is None:
        return value
    if kind is not bool and isinstance(value, bool) or not isinstance(value, _TYPES[kind]):
        raise ConfigError(path, f"expected {kind.__name__}, got {type(value).__name__}")
    return float(value) if kind is float else value


def config_from_dict(data: dict | None) -> Config:
    data = dict(data or {})
    profile = data.pop("profile", "default")
    if profile not in PROFILES:
        raise ConfigError("profile", f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    sections = {}
    for name, cls in SECTIONS.items():
        merged = dict(PROFILES[profile].get(name, {}))
        raw = data.pop(name, None) or {}
        if not isinstance(raw, dict):
            raise ConfigError(name, "section must be a mapping")
        allowed = {f.name: f for f in fields(cls) if f.init}
        for key, value in raw.items():
            if key not in allowed:
                raise ConfigError(f"{name}.{key}", "unknown key")
            merged[key] = _check_type(f"{name}.{key}", value, allowed[key].type)
        try:
            sections[name] = cls(**merged)
        except (ValueError, TypeError) as err:
            raise ConfigError(name, str(err)) from None
    if data:
        raise ConfigError(sorted(data)[0], "unknown key")
    return Config(profile=profile, **sections)


def load_config(path=None) -> Config:
    """Read a YAML config; ``None`` or an empty file gives the defaults."""
    if path is None:
        return config_from_dict({})
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError("", f"malformed YAML: {err}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError("", "top level must be a mapping")
    return config_from_dict(data)
