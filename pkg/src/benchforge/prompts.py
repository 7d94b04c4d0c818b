"""Prompt template assets.

Templates ship as UTF-8 text files with ``{placeholder}`` slots and may be
overridden by pointing the config's prompt_dir at a directory holding files
of the same names. Fingerprints of the rendered templates are journaled so
resumed runs detect prompt drift.
"""

from __future__ import annotations

import hashlib
import re
from functools import lru_cache
from importlib import resources
from pathlib import Path

TEMPLATE_NAMES = ("detect", "translate", "judge")

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@lru_cache(maxsize=None)
def load_template(name: str, prompt_dir: str | None = None) -> str:
    if name not in TEMPLATE_NAMES:
        raise ValueError(f"unknown prompt template: {name}")
    if prompt_dir:
        return Path(prompt_dir, f"{name}.txt").read_text(encoding="utf-8")
    return resources.files("benchforge").joinpath(f"prompts/{name}.txt").read_text(encoding="utf-8")


def render(template: str, **values: str) -> str:
    """Substitute {placeholder} slots; unknown slot names are an error.

    Only bare lower-case names are treated as placeholders, so JSON braces
    in a template body pass through untouched.
    """

    def _sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise KeyError(f"template placeholder {{{key}}} has no value")
        return values[key]

    return _PLACEHOLDER_RE.sub(_sub, template)


def fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
