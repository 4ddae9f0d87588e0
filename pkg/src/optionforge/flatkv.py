"""Flat ``key=value`` text format with dotted section keys.

Example::

    # comment
    env.name=four_rooms
    env.side=11
    train.algorithm=diayn
"""
from __future__ import annotations

from typing import Mapping

from .errors import InvalidSpecError


def parse_flat(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidSpecError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            raise InvalidSpecError(f"line {lineno}: empty key")
        if key in out:
            raise InvalidSpecError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_flat(values: Mapping[str, object]) -> str:
    lines = []
    for key, value in values.items():
        text = str(value)
        if "\n" in text:
            raise InvalidSpecError(f"value for {key!r} contains a newline")
        lines.append(f"{key}={text}")
    return "\n".join(lines) + "\n"
