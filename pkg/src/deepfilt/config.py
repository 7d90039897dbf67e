"""Flat key-value configuration format.

One assignment per line, `section.key = value`; blank lines and `#`
comments are ignored. Values stay strings here; callers convert. The
format is the experiment provenance record, so formatting is canonical
(sorted keys) to make dumps diffable and hashable.
"""

from __future__ import annotations

from pathlib import Path as FsPath

from .errors import ValidationError


def parse_flat(text: str) -> dict[str, str]:
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"config line {lineno} is not 'key = value': {raw!r}")
        key = key.strip()
        if not key:
            raise ValidationError(f"config line {lineno} has an empty key")
        if key in mapping:
            raise ValidationError(f"config line {lineno} repeats key {key!r}")
        mapping[key] = value.strip()
    return mapping


def format_flat(mapping: dict[str, str]) -> str:
    return "".join(f"{k} = {mapping[k]}\n" for k in sorted(mapping))


def load_flat(file) -> dict[str, str]:
    return parse_flat(FsPath(file).read_text())


def save_flat(mapping: dict[str, str], file) -> None:
    FsPath(file).write_text(format_flat(mapping))
