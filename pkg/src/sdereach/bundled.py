"""Bundled example systems shipped as package data."""

from __future__ import annotations

import shutil
from importlib import resources
from pathlib import Path

_NAMES = (
    "doublewell",
    "wolfe_quapp",
    "brownian_1",
    "brownian_2",
    "brownian_3",
    "brownian_4",
    "constant_drift",
    "jordan_block",
)


def names() -> tuple[str, ...]:
    return _NAMES


def path(name: str) -> Path:
    """Filesystem path of a bundled system file; accepts 'name' or 'name.json'."""
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in _NAMES:
        raise KeyError(f"no bundled system named '{name}'; known: {', '.join(_NAMES)}")
    return Path(resources.files("sdereach.data") / f"{stem}.json")


def resolve(system_arg: str) -> Path:
    """Resolve a --system argument: an existing file wins, else a bundled name."""
    p = Path(system_arg)
    if p.exists():
        return p
    stem = Path(system_arg).name
    stem = stem[:-5] if stem.endswith(".json") else stem
    if stem in _NAMES:
        return path(stem)
    raise FileNotFoundError(
        f"'{system_arg}' is neither an existing file nor a bundled system name"
    )


def export(out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in _NAMES:
        dst = out / f"{name}.json"
        shutil.copyfile(path(name), dst)
        written.append(dst)
    return written
