#!/usr/bin/env python3
"""
Settings layer for kron-gemini
Resolves defaults, the YAML settings file and KRON_GEMINI_* environment variables
"""

import os
import logging
from dataclasses import dataclass, asdict, fields, replace
from typing import Dict, Any, Optional

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "KRON_GEMINI_"
DEFAULT_CONFIG_PATH = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs", "defaults.yaml"
)

EVENT_PROVIDERS = ("console", "jsonl", "disabled")
CLIME_INNER_SOLVERS = ("highs", "admm")


@dataclass(frozen=True)
class Settings:
    """Resolved numerical and runtime settings"""

    # glasso
    conv_tol: float = 1e-6
    kkt_tol: float = 1e-6
    max_sweeps: int = 500
    inner_tol: float = 1e-10
    inner_max_iter: int = 10000
    # clime
    feas_tol: float = 1e-6
    pd_eps: float = 1e-6
    clime_inner: str = "highs"
    admm_tol: float = 1e-7
    admm_max_iter: int = 50000
    # shared
    edge_tol: float = 1e-8
    kron_guard: int = 4096
    min_penalty: float = 1e-6
    threads: int = 1
    log_level: str = "INFO"
    event_provider: str = "console"

    def with_overrides(self, **overrides: Any) -> "Settings":
        """Return a copy with non-None overrides applied and validated"""
        clean = {k: v for k, v in overrides.items() if v is not None}
        return validate(replace(self, **clean))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _coerce(name: str, raw: Any, target: type) -> Any:
    try:
        if target is int:
            return int(raw)
        if target is float:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for setting '{name}': {raw!r} ({e})")


def validate(settings: Settings) -> Settings:
    """Check ranges of every setting"""
    positive = ("conv_tol", "kkt_tol", "inner_tol", "feas_tol", "pd_eps", "admm_tol",
                "edge_tol", "min_penalty")
    for name in positive:
        if getattr(settings, name) <= 0:
            raise ConfigError(f"Setting '{name}' must be positive")
    for name in ("max_sweeps", "inner_max_iter", "admm_max_iter", "kron_guard", "threads"):
        if getattr(settings, name) < 1:
            raise ConfigError(f"Setting '{name}' must be at least 1")
    if settings.clime_inner not in CLIME_INNER_SOLVERS:
        raise ConfigError(f"Unknown CLIME inner solver: {settings.clime_inner}")
    if settings.event_provider not in EVENT_PROVIDERS:
        raise ConfigError(f"Unknown event provider: {settings.event_provider}")
    if logging.getLevelName(settings.log_level.upper()) == f"Level {settings.log_level.upper()}":
        raise ConfigError(f"Unknown log level: {settings.log_level}")
    return settings


def load_yaml_settings(path: str) -> Dict[str, Any]:
    """Read a YAML settings file; a missing file yields no overrides"""
    if not os.path.exists(path):
        logger.debug(f"Settings file not found, using defaults: {path}")
        return {}
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed settings file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Settings file {path} must contain a mapping")
    return data


def load_settings(path: Optional[str] = None, environ: Optional[Dict[str, str]] = None,
                  use_dotenv: bool = True) -> Settings:
    """
    Resolve settings from defaults, YAML file and environment

    Args:
        path: YAML file; defaults to $KRON_GEMINI_CONFIG or configs/defaults.yaml
        environ: environment mapping, os.environ when omitted
        use_dotenv: load a .env file into the process environment first

    Returns:
        Settings: validated settings
    """
    if use_dotenv and environ is None:
        load_dotenv()
    env = os.environ if environ is None else environ

    path = path or env.get(f"{ENV_PREFIX}CONFIG", DEFAULT_CONFIG_PATH)
    known = {f.name: f.type for f in fields(Settings)}
    types = {name: (int if t in (int, "int") else float if t in (float, "float") else str)
             for name, t in known.items()}

    values: Dict[str, Any] = {}
    for name, raw in load_yaml_settings(path).items():
        if name not in known:
            raise ConfigError(f"Unknown setting '{name}' in {path}")
        values[name] = _coerce(name, raw, types[name])

    for name in known:
        raw = env.get(f"{ENV_PREFIX}{name.upper()}")
        if raw is not None and raw != "":
            values[name] = _coerce(name, raw, types[name])

    return validate(Settings(**values))
