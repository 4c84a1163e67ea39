"""Editable prompt templates with named placeholders.

Templates ship as versioned defaults inside the package; a directory of
same-named ``.txt`` files can override them via :func:`set_template_dir`.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Optional

_override_dir: Optional[Path] = None


def set_template_dir(path: Optional[str]) -> None:
    global _override_dir
    _override_dir = Path(path) if path else None


def load(name: str) -> str:
    if _override_dir is not None:
        candidate = _override_dir / f"{name}.txt"
        if candidate.exists():
            return candidate.read_text(encoding="utf-8")
    return resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")


def render(name: str, **values: str) -> str:
    return load(name).format(**values)
