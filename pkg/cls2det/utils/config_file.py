"""
config_file.py - Strict JSON run-config files and the resolved-config snapshot written beside outputs

Precedence: dataclass defaults < --config file < explicit command-line flags.
"""

import dataclasses
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

from cls2det.errors import ConfigError
from .logger import get_logger, setup_logger

setup_logger()
logger = get_logger()

RESOLVED_CONFIG_FILE = "resolved_config.json"


def field_names(*classes) -> set:
    names = set()
    for cls in classes:
        names |= {f.name for f in dataclasses.fields(cls)}
    return names


def load_run_config(path: Path, allowed: Iterable[str]) -> Dict[str, Any]:
    """Parse a JSON object; any key outside `allowed` is an error."""
    path = Path(path)
    try:
        with open(path, "r") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    allowed = set(allowed)
    unknown = sorted(k for k in doc if k not in allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s) {unknown}")
    return doc


def merge_layers(file_values: Optional[Mapping[str, Any]], cli_values: Mapping[str, Any]) -> Dict[str, Any]:
    """File values overridden by every CLI value that was actually given (not None)."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in cli_values.items() if v is not None})
    return merged


def build_dataclass(cls, values: Mapping[str, Any]):
    names = {f.name for f in dataclasses.fields(cls)}
    try:
        return cls(**{k: v for k, v in values.items() if k in names})
    except TypeError as e:
        raise ConfigError(f"invalid {cls.__name__}: {e}") from e


def to_jsonable(value):
    if dataclasses.is_dataclass(value):
        return {k: to_jsonable(v) for k, v in dataclasses.asdict(value).items()}
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def write_resolved_config(out_dir: Path, config: Mapping[str, Any]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / RESOLVED_CONFIG_FILE
    with open(path, "w") as f:
        json.dump(to_jsonable(dict(config)), f, indent=2, sort_keys=True)
    logger.debug(f"Resolved config written to {path}")
    return path
