"""Configuration loading for lightalign."""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import yaml

logger = logging.getLogger(__name__)

# Type alias for config dictionary
ConfigDict = dict[str, Any]

DEFAULT_CONFIG: ConfigDict = {
    # Label generation
    "mode": "basic",  # basic, iterative, literal
    "dim": 1024,  # hyper-sphere dimension d
    "seed": 0,
    # Propagation
    "rounds": 2,  # label propagation rounds k
    "reverse_triples": True,
    "per_round_l2": True,
    "three_view": True,  # False degrades to classical LP (side view only)
    # Decoding
    "topk": 500,  # neighbours kept per source entity
    "tau": 0.05,  # Sinkhorn temperature
    "sinkhorn_q": 10,  # Sinkhorn iteration rounds
    "decoder": "sinkhorn",  # sinkhorn, greedy
    "backend": "exact",  # exact, faiss
    "candidates": "test",  # test, all
    # Self-training
    "iterative_epochs": 5,
    # Runtime
    "threads": 1,
}

CONFIG_PATH = Path.home() / ".config" / "lightalign" / "config.yaml"

THREADS_ENV = "LIGHTALIGN_THREADS"

# Valid values for constrained config keys
VALID_MODES = {"basic", "iterative", "literal"}
VALID_DECODERS = {"sinkhorn", "greedy"}
VALID_BACKENDS = {"exact", "faiss"}
VALID_CANDIDATES = {"test", "all"}

# Keys that must be boolean
_BOOLEAN_KEYS = {"reverse_triples", "per_round_l2", "three_view"}

# Keys that must be integers >= 1
_POSITIVE_KEYS = {"dim", "topk", "sinkhorn_q", "threads"}

# Keys that must be integers >= 0
_NON_NEGATIVE_KEYS = {"rounds", "iterative_epochs"}


class ConfigError(ValueError):
    """Raised when a configuration value violates its constraint."""


def _is_int(val: Any) -> bool:
    return isinstance(val, int) and not isinstance(val, bool)


def validate_config(config: ConfigDict) -> list[str]:
    """Validate configuration values and return a list of warnings.

    Checks types, ranges, and known values. Never raises on bad config,
    the caller decides whether a warning is fatal.
    """
    warnings: list[str] = []

    for key in sorted(_POSITIVE_KEYS):
        val = config.get(key)
        if val is not None and (not _is_int(val) or val < 1):
            warnings.append(f"{key}={val!r} must be an integer >= 1")

    for key in sorted(_NON_NEGATIVE_KEYS):
        val = config.get(key)
        if val is not None and (not _is_int(val) or val < 0):
            warnings.append(f"{key}={val!r} must be an integer >= 0")

    tau = config.get("tau")
    if tau is not None and (
        isinstance(tau, bool) or not isinstance(tau, (int, float)) or not tau > 0
    ):
        warnings.append(f"tau={tau!r} must be > 0")

    seed = config.get("seed")
    if seed is not None and (not _is_int(seed) or seed < 0):
        warnings.append(f"seed={seed!r} must be a non-negative integer")

    for key, valid in (
        ("mode", VALID_MODES),
        ("decoder", VALID_DECODERS),
        ("backend", VALID_BACKENDS),
        ("candidates", VALID_CANDIDATES),
    ):
        val = config.get(key)
        if val is not None and val not in valid:
            warnings.append(f"{key}={val!r} is not valid. Valid: {', '.join(sorted(valid))}")

    for key in sorted(_BOOLEAN_KEYS):
        val = config.get(key)
        if val is not None and not isinstance(val, bool):
            warnings.append(f"{key}={val!r} must be true or false")

    unknown = set(config.keys()) - set(DEFAULT_CONFIG.keys())
    if unknown:
        warnings.append(f"Unknown config keys (possible typos): {', '.join(sorted(unknown))}")

    return warnings


def load_config(path: Path | None = None) -> ConfigDict:
    """Load configuration from YAML file, falling back to defaults.

    Validates the merged config and logs warnings for any issues found.
    """
    config = DEFAULT_CONFIG.copy()
    config_path = path if path is not None else CONFIG_PATH

    if config_path.exists():
        with open(config_path, encoding="utf-8") as f:
            user_config = yaml.safe_load(f) or {}
        if not isinstance(user_config, dict):
            raise ConfigError(f"{config_path}: top level must be a mapping")
        config.update(user_config)
    elif path is not None:
        raise ConfigError(f"config file not found: {path}")

    for warning in validate_config(config):
        logger.warning("Config: %s", warning)

    return config


def resolve_threads(flag: int | None) -> int:
    """Worker cap: the --threads flag, else $LIGHTALIGN_THREADS, else 1."""
    if flag is not None:
        return flag
    env = os.environ.get(THREADS_ENV, "").strip()
    if not env:
        return 1
    try:
        threads = int(env)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={env!r} must be an integer >= 1") from None
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV}={env!r} must be an integer >= 1")
    return threads


@dataclass(frozen=True)
class AlignConfig:
    """Typed, validated view of the alignment configuration."""

    mode: str = "basic"
    dim: int = 1024
    seed: int = 0
    rounds: int = 2
    reverse_triples: bool = True
    per_round_l2: bool = True
    three_view: bool = True
    topk: int = 500
    tau: float = 0.05
    sinkhorn_q: int = 10
    decoder: str = "sinkhorn"
    backend: str = "exact"
    candidates: str = "test"
    iterative_epochs: int = 5
    threads: int = 1

    def __post_init__(self) -> None:
        # Strict path: the first violated constraint is fatal.
        problems = validate_config(asdict(self))
        if problems:
            raise ConfigError(problems[0])

    @classmethod
    def from_dict(cls, config: ConfigDict) -> AlignConfig:
        """Build from a merged config dict; unknown keys are rejected."""
        unknown = set(config.keys()) - set(DEFAULT_CONFIG.keys())
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(sorted(unknown))}")
        merged = {**DEFAULT_CONFIG, **config}
        if isinstance(merged["tau"], int) and not isinstance(merged["tau"], bool):
            merged["tau"] = float(merged["tau"])
        return cls(**merged)

    def to_dict(self) -> ConfigDict:
        return asdict(self)

    def replace(self, **changes: Any) -> AlignConfig:
        return AlignConfig.from_dict({**self.to_dict(), **changes})
