"""Line-oriented ``key = value`` text blocks.

Shared by the coupling-geometry file, slider-parameter file, episode
manifest, and the ellipsoid / diagnostics reports.  Lines are
``key = value`` with ``#`` comments; values keep their raw string form
and are converted by the typed accessors below.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def format_number(x: float) -> str:
    """Full-precision decimal text; integral values drop the trailing .0."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def format_vector(v) -> str:
    return " ".join(format_number(c) for c in np.asarray(v, dtype=float).ravel())


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected 'key = value'", line=lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise FormatError("empty key", line=lineno)
        if key in out:
            raise FormatError(f"duplicate key {key!r}", line=lineno)
        out[key] = value.strip()
    return out


def format_kv(pairs) -> str:
    lines = [f"{key} = {value}" for key, value in pairs]
    return "\n".join(lines) + "\n"


def require(kv: dict[str, str], key: str) -> str:
    if key not in kv:
        raise FormatError(f"missing key {key!r}")
    return kv[key]


def float_field(kv: dict[str, str], key: str) -> float:
    raw = require(kv, key)
    try:
        return float(raw)
    except ValueError as exc:
        raise FormatError(f"key {key!r}: not a number: {raw!r}") from exc


def int_field(kv: dict[str, str], key: str) -> int:
    raw = require(kv, key)
    try:
        return int(raw)
    except ValueError as exc:
        raise FormatError(f"key {key!r}: not an integer: {raw!r}") from exc


def vector_field(kv: dict[str, str], key: str, size: int) -> np.ndarray:
    raw = require(kv, key).split()
    if len(raw) != size:
        raise FormatError(f"key {key!r}: expected {size} numbers, got {len(raw)}")
    try:
        return np.array([float(t) for t in raw])
    except ValueError as exc:
        raise FormatError(f"key {key!r}: not a number list: {kv[key]!r}") from exc
