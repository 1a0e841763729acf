"""JSON configuration loading with path-qualified validation errors."""

from __future__ import annotations

import hashlib
import json
import os

from .errors import ConfigError, DataError

_REQUIRED = object()


def load_config(path) -> dict:
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def cfg_get(cfg: dict, path: str, kind=None, default=_REQUIRED, choices=None):
    """Fetch ``a.b.c`` from nested dicts with type/choice validation.

    Missing values fall back to ``default``; with no default the error names
    the JSON path, as do all validation failures.
    """
    node = cfg
    parts = path.split(".")
    for i, part in enumerate(parts):
        if not isinstance(node, dict):
            raise ConfigError(f"{'.'.join(parts[:i])}: expected an object")
        if part not in node:
            if default is _REQUIRED:
                raise ConfigError(f"{path}: required value missing")
            return default
        node = node[part]
    if node is None and default is not _REQUIRED:
        return default
    if kind is bool:
        if not isinstance(node, bool):
            raise ConfigError(f"{path}: expected a boolean, got {node!r}")
    elif kind is int:
        if isinstance(node, bool) or not isinstance(node, int):
            raise ConfigError(f"{path}: expected an integer, got {node!r}")
    elif kind is float:
        if isinstance(node, bool) or not isinstance(node, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {node!r}")
        node = float(node)
    elif kind is str:
        if not isinstance(node, str):
            raise ConfigError(f"{path}: expected a string, got {node!r}")
    elif kind is list:
        if not isinstance(node, list):
            raise ConfigError(f"{path}: expected a list, got {node!r}")
    elif kind is dict:
        if not isinstance(node, dict):
            raise ConfigError(f"{path}: expected an object, got {node!r}")
    if choices is not None and node not in choices:
        raise ConfigError(f"{path}: {node!r} is not one of {sorted(choices)}")
    return node


def config_hash(cfg: dict) -> str:
    """Stable short hash of the canonicalized configuration."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(canon).hexdigest()[:16]
