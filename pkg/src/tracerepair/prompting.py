"""Prompt template loading and placeholder substitution.

Templates are plain text files with single-brace ``{name}`` placeholders.
Substitution is regex-based rather than ``str.format`` so that payload
content containing braces (code, JSON) can never corrupt rendering.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


def default_template_path(name: str) -> Path:
    """Path of a template shipped with the package, e.g. ``intervention``."""
    return Path(str(resources.files("tracerepair").joinpath("prompts", f"{name}.txt")))


def load_template(path: str | Path) -> str:
    return Path(path).read_text(encoding="utf-8")


def render_template(template: str, values: dict[str, str]) -> str:
    """Fill every placeholder the template declares.

    Raises KeyError for a declared placeholder with no supplied value, so a
    half-rendered prompt can never reach a gateway.
    """
    declared = set(_PLACEHOLDER.findall(template))
    missing = declared - set(values)
    if missing:
        raise KeyError(f"template placeholders not supplied: {sorted(missing)}")

    def _sub(match: re.Match[str]) -> str:
        return str(values[match.group(1)])

    return _PLACEHOLDER.sub(_sub, template)
