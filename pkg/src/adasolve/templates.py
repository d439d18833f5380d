"""Loader for the versioned prompt-template assets.

Templates live under ``templates/<version>/`` as plain text with named
placeholders ({question}, {graph}, {history}, {step}, ...). Rendering
substitutes only known placeholder names, so literal braces in template
bodies (e.g. JSON examples) survive untouched.
"""

from __future__ import annotations

import re
from importlib import resources

TEMPLATE_VERSION = "v1"

_PLACEHOLDER_RE = re.compile(
    r"\{(question|graph|history|step|k|n|profile|schema_fields|previous)\}"
)


def load_template(name: str, version: str = TEMPLATE_VERSION) -> str:
    path = resources.files("adasolve").joinpath(f"templates/{version}/{name}.txt")
    return path.read_text(encoding="utf-8")


def render(template: str, **values) -> str:
    def _sub(m: re.Match) -> str:
        key = m.group(1)
        if key in values:
            return str(values[key])
        return m.group(0)

    return _PLACEHOLDER_RE.sub(_sub, template)
