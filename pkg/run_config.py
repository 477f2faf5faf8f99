"""
Run Configuration

Every tunable of the pipeline in one nested dataclass, loadable from a
JSON file and exposed to the CLI as click default values.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Type, Union

from classifier_lib import TreeParams
from errors import ConfigError, DomainError
from features_lib import DEFAULT_WINDOW_SIZES, check_window_sizes
from preprocess_lib import SmoothingParams
from synth_lib import PathLossParams, SynthParams

logger = logging.getLogger(__name__)

CONFIG_ENV = "CELLMODE_CONFIG"


@dataclass(frozen=True)
class CVParams:
    k: int = 5
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise DomainError("k must be >= 2")


@dataclass(frozen=True)
class RunConfig:
    smoothing: SmoothingParams = field(default_factory=SmoothingParams)
    window_sizes: Tuple[int, ...] = DEFAULT_WINDOW_SIZES
    tree: TreeParams = field(default_factory=TreeParams)
    cv: CVParams = field(default_factory=CVParams)
    synth: SynthParams = field(default_factory=SynthParams)

    def __post_init__(self):
        object.__setattr__(self, "window_sizes", check_window_sizes(self.window_sizes))


# Field types accepted from JSON, per section
_SCHEMA: Dict[Type, Dict[str, Type]] = {
    SmoothingParams: {"max_gap": int, "min_flank": int},
    TreeParams: {"max_depth": int, "min_leaf": int, "min_split": int},
    CVParams: {"k": int, "seed": int, "stratified": bool},
    PathLossParams: {
        "p0_dbm": float,
        "d0_m": float,
        "alpha": float,
        "shadow_sigma_db": float,
        "decorrelation_m": float,
    },
    SynthParams: {
        "duration_s": int,
        "extent_m": float,
        "spacing_m": float,
        "jitter_frac": float,
        "path_loss": PathLossParams,
        "hysteresis_db": float,
        "seed": int,
        "suite": int,
    },
}


def _check_type(value: Any, expected: Type, where: str) -> Any:
    # bool is an int subclass; JSON true/false must not pass as numbers
    if expected is bool:
        ok = isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = False
    if not ok:
        raise ConfigError(f"{where} must be {expected.__name__}, got {json.dumps(value)}")
    return float(value) if expected is float else value


def _build(cls: Type, data: Any, where: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where} must be an object")
    schema = _SCHEMA[cls]
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")

    kwargs = {}
    for name, value in data.items():
        expected = schema[name]
        if expected in _SCHEMA:
            kwargs[name] = _build(expected, value, f"{where}.{name}")
        else:
            kwargs[name] = _check_type(value, expected, f"{where}.{name}")
    try:
        return cls(**kwargs)
    except DomainError as e:
        raise ConfigError(f"{where}: {e}") from e


def config_from_dict(data: Any) -> RunConfig:
    """
    Build a RunConfig from parsed JSON

    Missing keys keep their defaults.

    Raises:
        ConfigError: unknown keys, wrong types or invalid values
    """
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a JSON object")
    sections = {"smoothing": SmoothingParams, "tree": TreeParams, "cv": CVParams, "synth": SynthParams}
    unknown = sorted(set(data) - set(sections) - {"window_sizes"})
    if unknown:
        raise ConfigError(f"unknown key(s) in config: {', '.join(unknown)}")

    kwargs: Dict[str, Any] = {
        name: _build(cls, data[name], name) for name, cls in sections.items() if name in data
    }
    if "window_sizes" in data:
        sizes = data["window_sizes"]
        if not isinstance(sizes, list):
            raise ConfigError("window_sizes must be a list of integers")
        kwargs["window_sizes"] = tuple(_check_type(s, int, "window_sizes[]") for s in sizes)
    try:
        return RunConfig(**kwargs)
    except DomainError as e:
        raise ConfigError(str(e)) from e


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load a JSON RunConfig

    Args:
        path: Config file; falls back to $CELLMODE_CONFIG, then to the defaults

    Returns:
        The RunConfig
    """
    path = path or os.getenv(CONFIG_ENV)
    if not path:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    config = config_from_dict(data)
    logger.info("Loaded config from %s", path)
    return config


def _sizes(sizes: Tuple[int, ...]) -> str:
    return ",".join(str(s) for s in sizes)


def to_default_map(config: RunConfig) -> Dict[str, Dict[str, Any]]:
    """Per-subcommand option defaults for click's default_map"""
    smoothing = {"max_gap": config.smoothing.max_gap, "min_flank": config.smoothing.min_flank}
    tree = {"max_depth": config.tree.max_depth, "min_leaf": config.tree.min_leaf}
    # Left unset when derived, so --min-leaf on the command line still doubles into it
    if config.tree.min_split != 2 * config.tree.min_leaf:
        tree["min_split"] = config.tree.min_split
    cv = {"k": config.cv.k, "seed": config.cv.seed, "stratified": config.cv.stratified}
    synth = config.synth
    return {
        "smooth": dict(smoothing),
        "features": {**smoothing, "window_sizes": _sizes(config.window_sizes)},
        "train": dict(tree),
        "eval": {**tree, **cv, "window_sizes": _sizes(config.window_sizes)},
        "simulate": {
            "duration_s": synth.duration_s,
            "extent_m": synth.extent_m,
            "spacing_m": synth.spacing_m,
            "jitter_frac": synth.jitter_frac,
            "p0_dbm": synth.path_loss.p0_dbm,
            "alpha": synth.path_loss.alpha,
            "shadow_sigma": synth.path_loss.shadow_sigma_db,
            "decorrelation_m": synth.path_loss.decorrelation_m,
            "hysteresis_db": synth.hysteresis_db,
            "seed": synth.seed,
        },
    }
