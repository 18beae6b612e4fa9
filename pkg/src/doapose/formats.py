"""Versioning and small helpers shared by the file formats."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from .errors import FormatVersionError, SchemaError

FORMAT_VERSION = "1.0"
SUPPORTED_MAJOR = 1


def check_version(obj: dict, path: str = "", required: bool = True) -> None:
    """Reject documents whose ``format_version`` major is unknown."""
    version = obj.get("format_version")
    if version is None:
        if required:
            raise FormatVersionError("missing format_version", path or "format_version")
        return
    try:
        major = int(str(version).split(".")[0])
    except ValueError:
        raise FormatVersionError(f"unparseable format_version {version!r}", path or "format_version") from None
    if major != SUPPORTED_MAJOR:
        raise FormatVersionError(
            f"unsupported format_version {version!r} (supported major: {SUPPORTED_MAJOR})",
            path or "format_version",
        )


def dumps(obj: Any, indent: int | None = 2) -> str:
    """Deterministic JSON text (sorted keys, no trailing whitespace)."""
    return json.dumps(obj, sort_keys=True, indent=indent, allow_nan=False)


def dump_line(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def require(d: dict, key: str, kind, path: str = ""):
    """Fetch ``d[key]`` and check its type, naming the key path on failure."""
    full = f"{path}.{key}" if path else key
    if not isinstance(d, dict):
        raise SchemaError("expected an object", path)
    if key not in d:
        raise SchemaError("missing required key", full)
    value = d[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (isinstance(value, bool) and kind is not bool):
        name = getattr(kind, "__name__", str(kind))
        raise SchemaError(f"expected {name}, got {type(value).__name__}", full)
    return value


def optional(d: dict, key: str, kind, default, path: str = ""):
    if key not in d or d[key] is None:
        return default
    return require(d, key, kind, path)
